#include "quic/qten.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "quic/error.hpp"

namespace quic {
namespace {

constexpr std::array<char, 4> kTensorMagic{'Q', 'T', 'E', 'N'};
constexpr std::array<char, 4> kCheckpointMagic{'Q', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string("truncated stream reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void expect_magic(std::istream& in, const std::array<char, 4>& magic, const char* what) {
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic.data(), 4) != 0) {
        throw FormatError(std::string("bad magic: not a ") + what + " stream");
    }
}

std::string read_bytes(std::istream& in, std::uint32_t n, const char* what) {
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw FormatError(std::string("truncated stream reading ") + what);
    return s;
}

}  // namespace

void write_qten(std::ostream& out, const Tensor& t) {
    out.write(kTensorMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    if (!out) throw FormatError("failed writing QTEN stream");
}

Tensor read_qten(std::istream& in) {
    expect_magic(in, kTensorMagic, "QTEN");
    const std::uint32_t rank = get_u32(in, "QTEN rank");
    if (rank > kMaxRank) throw FormatError("QTEN rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
        d = get_u32(in, "QTEN dims");
        if (d == 0) throw FormatError("QTEN dimension of size 0");
        numel *= d;
    }
    Tensor t = rank == 0 ? Tensor() : Tensor(shape);
    for (std::size_t i = 0; i < numel; ++i) t[i] = std::bit_cast<float>(get_u32(in, "QTEN payload"));
    return t;
}

void save_qten(const std::filesystem::path& path, const Tensor& t) {
    std::ostringstream ss(std::ios::binary);
    write_qten(ss, t);
    write_file_atomic(path, ss.str());
}

Tensor load_qten(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_qten(in);
}

const Tensor& Checkpoint::at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw FormatError("checkpoint has no tensor named '" + name + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    out.write(kCheckpointMagic.data(), 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    out.write(ckpt.meta.data(), static_cast<std::streamsize>(ckpt.meta.size()));
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_qten(out, t);
    }
    if (!out) throw FormatError("failed writing checkpoint stream");
}

Checkpoint read_checkpoint(std::istream& in) {
    expect_magic(in, kCheckpointMagic, "checkpoint");
    const std::uint32_t version = get_u32(in, "checkpoint version");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.meta = read_bytes(in, get_u32(in, "checkpoint meta length"), "checkpoint meta");
    const std::uint32_t count = get_u32(in, "checkpoint tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = read_bytes(in, get_u32(in, "tensor name length"), "tensor name");
        ckpt.tensors.emplace_back(std::move(name), read_qten(in));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ostringstream ss(std::ios::binary);
    write_checkpoint(ss, ckpt);
    write_file_atomic(path, ss.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    return read_checkpoint(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    std::random_device rd;
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot create " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw FormatError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw FormatError("cannot rename into " + path.string() + ": " + ec.message());
    }
}

}  // namespace quic
