#pragma once

// QTEN binary tensor files and the named-tensor checkpoint container.
//
// QTEN layout (little-endian):
//   "QTEN" | u32 rank | rank x u32 dims | row-major f32 payload
//
// Checkpoint layout (little-endian):
//   "QCKP" | u32 version (=1) | u32 meta_len | meta bytes (JSON text)
//   | u32 count | count x ( u32 name_len | name bytes | QTEN record )

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "quic/tensor.hpp"

namespace quic {

void write_qten(std::ostream& out, const Tensor& t);
Tensor read_qten(std::istream& in);

void save_qten(const std::filesystem::path& path, const Tensor& t);
Tensor load_qten(const std::filesystem::path& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct Checkpoint {
    std::string meta;  // JSON text describing the architecture and run
    NamedTensors tensors;

    const Tensor& at(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Writes through a temporary sibling file and renames it into place, so an
// interrupted write never leaves a truncated artifact at `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace quic
