#pragma once

// Command-line front end: gen, train, eval, bench, export-embeddings.
//
// Exit codes: 0 success, 2 configuration error, 3 data or format error,
// 4 numeric divergence, 1 anything else.

#include <iosfwd>
#include <string>

#include "quic/training.hpp"

namespace quic::cli {

inline constexpr const char* kToolVersion = "quic 1.0.0";

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3, diverged = 4 };

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// JSON text using TrainConfig field names. from_json starts from `base` and
// overrides only the keys present; a run manifest (with a "config" key) is
// accepted as well.
std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text, TrainConfig base);

}  // namespace quic::cli
