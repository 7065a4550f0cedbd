#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "quic/error.hpp"
#include "quic/qten.hpp"
#include "quic/tensor.hpp"
#include "quic/tracking.hpp"

using namespace quic;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / "quic_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 0}) == 4.0f);
    CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
    CHECK_THROWS_AS(t.at({0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);

    Tensor s;
    CHECK(s.rank() == 0);
    CHECK(s.numel() == 1);
    CHECK(Tensor::scalar(2.5f).item() == 2.5f);
    CHECK_THROWS_AS(t.item(), UsageError);
}

TEST_CASE("reshape keeps the payload") {
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor r = t.reshaped({3, 2});
    CHECK(r.at({2, 1}) == 6.0f);
    CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
    CHECK(shape_str({2, 3}) == "[2x3]");
}

TEST_CASE("identical compares bits and shape") {
    Tensor a({2}, {0.0f, 1.0f});
    Tensor b({2}, {-0.0f, 1.0f});
    CHECK_FALSE(a.identical(b));
    CHECK(a.identical(Tensor({2}, {0.0f, 1.0f})));
    CHECK_FALSE(a.identical(Tensor({1, 2}, {0.0f, 1.0f})));
}

TEST_CASE("allocation probe counts tensor payloads") {
    AllocationProbe probe;
    {
        Tensor a({10, 10});
        Tensor b({5});
        CHECK(probe.live_elements() == 105);
    }
    CHECK(probe.live_elements() == 0);
    CHECK(probe.peak_elements() == 105);
}

TEST_CASE("nested probes restore the outer peak") {
    AllocationProbe outer;
    Tensor keep({7});
    {
        AllocationProbe inner;
        Tensor tmp({50});
        CHECK(inner.peak_elements() == 50);
    }
    CHECK(outer.peak_elements() == 57);
}

TEST_CASE("qten round trip") {
    const Tensor t({2, 2, 3}, {1, -2, 3.5f, 4, 5, 6, 7, 8, 9, 10, 11, 1e-30f});
    std::stringstream ss;
    write_qten(ss, t);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "QTEN");
    CHECK(bytes.size() == 4 + 4 + 3 * 4 + 12 * 4);
    CHECK(read_qten(ss).identical(t));
}

TEST_CASE("qten rejects malformed input") {
    std::stringstream bad_magic("QTEX\x01\x00\x00\x00");
    CHECK_THROWS_AS(read_qten(bad_magic), FormatError);

    std::stringstream ss;
    write_qten(ss, Tensor({4}, {1, 2, 3, 4}));
    std::string bytes = ss.str();
    bytes.resize(bytes.size() - 3);
    std::stringstream truncated(bytes);
    CHECK_THROWS_AS(read_qten(truncated), FormatError);

    CHECK_THROWS_AS(load_qten("/nonexistent/dir/x.qten"), FormatError);
}

TEST_CASE("checkpoint round trip and lookup") {
    Checkpoint c;
    c.meta = R"({"model":1})";
    c.tensors.emplace_back("a", Tensor({2}, {1, 2}));
    c.tensors.emplace_back("b.c", Tensor({1, 3}, {3, 4, 5}));
    std::stringstream ss;
    write_checkpoint(ss, c);
    const Checkpoint r = read_checkpoint(ss);
    CHECK(r.meta == c.meta);
    REQUIRE(r.tensors.size() == 2);
    CHECK(r.at("b.c").identical(c.tensors[1].second));
    CHECK_THROWS_AS(r.at("missing"), FormatError);

    std::string bytes = ss.str();
    bytes[0] = 'X';
    std::stringstream bad(bytes);
    CHECK_THROWS_AS(read_checkpoint(bad), FormatError);
}

TEST_CASE("files are written atomically") {
    const fs::path dir = scratch_dir("atomic");
    const fs::path p = dir / "out.qten";
    save_qten(p, Tensor({3}, {1, 2, 3}));
    CHECK(load_qten(p).identical(Tensor({3}, {1, 2, 3})));
    write_file_atomic(dir / "note.txt", "hello");
    std::ifstream in(dir / "note.txt");
    std::string s;
    in >> s;
    CHECK(s == "hello");
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 2);
}
