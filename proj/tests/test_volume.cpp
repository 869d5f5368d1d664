#include <doctest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "taugen/errors.hpp"
#include "taugen/rng.hpp"
#include "taugen/volume.hpp"

using namespace taugen;
using taugen::testing::TempDir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("read_volume returns header dims and x-fastest payload") {
    TempDir tmp("vol");
    const auto path = tmp.path / "v.tgv";

    Volume v(2, 2, 1, 1);
    v.data = {0.0f, 0.25f, 0.5f, 1.0f};
    write_volume(v, path);

    const Volume r = read_volume(path);
    CHECK(r.nx == 2);
    CHECK(r.ny == 2);
    CHECK(r.nz == 1);
    CHECK(r.channels == 1);
    CHECK(r.at(0, 0, 0, 0) == 0.0f);
    CHECK(r.at(0, 0, 0, 1) == 0.25f);  // x fastest
    CHECK(r.at(0, 0, 1, 0) == 0.5f);
    CHECK(r.at(0, 0, 1, 1) == 1.0f);
}

TEST_CASE("round trip is bit exact") {
    TempDir tmp("vol");
    RngState rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Volume v(3, 2, 2, 2);
        for (float& f : v.data) f = float(rng.uniform(-10.0, 10.0));
        const auto path = tmp.path / "r.tgv";
        write_volume(v, path);
        const Volume r = read_volume(path);
        CHECK(r == v);
    }
}

TEST_CASE("single-voxel file is 24 bytes: magic + 4 u32 + one float") {
    TempDir tmp("vol");
    Volume v(1, 1, 1, 1);
    v.data = {0.5f};
    const auto path = tmp.path / "one.tgv";
    write_volume(v, path);
    CHECK(std::filesystem::file_size(path) == 24);

    const auto bytes = slurp(path);
    CHECK(std::memcmp(bytes.data(), "TGV1", 4) == 0);
}

TEST_CASE("writes are deterministic") {
    TempDir tmp("vol");
    Volume v(2, 3, 1, 2);
    RngState rng(5);
    for (float& f : v.data) f = float(rng.uniform01());
    write_volume(v, tmp.path / "a.tgv");
    write_volume(v, tmp.path / "b.tgv");
    CHECK(slurp(tmp.path / "a.tgv") == slurp(tmp.path / "b.tgv"));
}

TEST_CASE("truncated payload raises SizeError") {
    TempDir tmp("vol");
    Volume v(2, 2, 2, 2);  // 16 floats
    const auto path = tmp.path / "t.tgv";
    write_volume(v, path);
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 4);  // drop the 16th float
    spit(path, bytes);
    CHECK_THROWS_AS(read_volume(path), SizeError);
}

TEST_CASE("bad magic raises FormatError") {
    TempDir tmp("vol");
    const auto path = tmp.path / "bad.tgv";
    spit(path, {'N', 'O', 'P', 'E', 0, 0, 0, 0});
    CHECK_THROWS_AS(read_volume(path), FormatError);
}

TEST_CASE("NaN volume raises DataError before any bytes are written") {
    TempDir tmp("vol");
    Volume v(2, 1, 1, 1);
    v.data = {0.5f, std::numeric_limits<float>::quiet_NaN()};
    const auto path = tmp.path / "nan.tgv";
    CHECK_THROWS_AS(write_volume(v, path), DataError);
    CHECK(!std::filesystem::exists(path));
}

TEST_CASE("normalize01 maps, clamps, and is idempotent on (0,1)") {
    Volume v(3, 1, 1, 1);
    v.data = {0.0f, 5.0f, 10.0f};
    const Volume n = normalize01(v, 0.0, 10.0);
    CHECK(n.data[0] == 0.0f);
    CHECK(n.data[1] == 0.5f);
    CHECK(n.data[2] == 1.0f);
    CHECK(n.value_unit == ValueUnit::normalized01);

    Volume c(2, 1, 1, 1);
    c.data = {-1.0f, 11.0f};
    const Volume nc = normalize01(c, 0.0, 10.0);
    CHECK(nc.data[0] == 0.0f);
    CHECK(nc.data[1] == 1.0f);

    const Volume same = normalize01(n, 0.0, 1.0);
    CHECK(same == n);  // identity on already-normalized data

    CHECK_THROWS_AS(normalize01(v, 1.0, 1.0), ParameterError);
    CHECK_THROWS_AS(normalize01(v, 2.0, 1.0), ParameterError);
}

TEST_CASE("normalize01 output always satisfies the normalized01 invariant") {
    RngState rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        Volume v(4, 3, 2, 1);
        for (float& f : v.data) f = float(rng.uniform(-100.0, 100.0));
        const double lo = rng.uniform(-50.0, 0.0);
        const double hi = lo + rng.uniform(0.1, 60.0);
        const Volume n = normalize01(v, lo, hi);
        n.validate();  // throws if any value leaves [0,1]
    }
}

TEST_CASE("atlas round trip and validation") {
    TempDir tmp("atlas");
    LabelAtlas a;
    a.nx = 2;
    a.ny = 2;
    a.nz = 1;
    a.labels = {0, 1, 2, 1};
    a.region_table = {{1, "Entorhinal"}, {2, "Hippocampus"}};
    const auto path = tmp.path / "atlas.tgv";
    write_atlas(a, path);
    CHECK(std::filesystem::exists(atlas_region_table_path(path)));

    const LabelAtlas r = read_atlas(path);
    CHECK(r.labels == a.labels);
    CHECK(r.region_table == a.region_table);

    // A nonzero label missing from the table must not validate.
    LabelAtlas bad = a;
    bad.labels[0] = 9;
    CHECK_THROWS_AS(write_atlas(bad, tmp.path / "bad.tgv"), ValidationError);

    // Non-integer voxel values are not labels.
    Volume v(2, 2, 1, 1);
    v.data = {0.0f, 1.5f, 0.0f, 0.0f};
    write_volume(v, tmp.path / "frac.tgv");
    std::ofstream(atlas_region_table_path(tmp.path / "frac.tgv")) << "{\"1\": \"X\"}";
    CHECK_THROWS_AS(read_atlas(tmp.path / "frac.tgv"), DataError);
}
