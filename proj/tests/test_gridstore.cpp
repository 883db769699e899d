#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "flaute/error.hpp"
#include "flaute/gridstore.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace flaute;

namespace {

GridField make_field(VariableId var, std::size_t nt, std::size_t ny, std::size_t nx, std::uint64_t seed) {
    GridField f;
    f.variable = var;
    f.axes.time_start = 946684800;
    f.axes.n_time = nt;
    for (std::size_t i = 0; i < ny; ++i) f.axes.lats.push_back(47.0 + 0.25 * double(i));
    for (std::size_t j = 0; j < nx; ++j) f.axes.lons.push_back(6.0 + 0.25 * double(j));
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(280.0f, 10.0f);
    f.values.resize(f.axes.size());
    for (float& v : f.values) v = n(rng);
    return f;
}

void write_meta(const std::filesystem::path& dir, std::size_t n_time, std::size_t payload_bytes) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta{{"variable", "tas"},      {"units", "K"},        {"time_start_epoch_s", 0},
                        {"time_step_s", 21600},   {"n_time", n_time},    {"lats", {50.0, 50.25}},
                        {"lons", {9.0, 9.25}},    {"dtype", "f32le"},    {"order", "time,lat,lon"}};
    std::ofstream(dir / "meta.json") << meta.dump();
    std::ofstream data(dir / "data.f32le", std::ios::binary);
    const std::string payload(payload_bytes, '\0');
    data.write(payload.data(), std::streamsize(payload.size()));
}

}  // namespace

TEST_CASE("declared 4x2x2 float32 with a 64-byte payload loads 16 values") {
    testing::TempDir tmp("gp");
    write_meta(tmp / "ok", 4, 64);
    const GridField f = load_gridpack(tmp / "ok");
    CHECK(f.values.size() == 16);
    CHECK(f.axes.n_time == 4);
}

TEST_CASE("short payload is a meta mismatch") {
    testing::TempDir tmp("gp");
    write_meta(tmp / "short", 4, 60);
    try {
        load_gridpack(tmp / "short");
        FAIL("expected MetaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MetaMismatch);
    }
}

TEST_CASE("missing gridpack is MissingFile") {
    testing::TempDir tmp("gp");
    try {
        load_gridpack(tmp / "absent");
        FAIL("expected MissingFile");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingFile);
    }
}

TEST_CASE("round-trip is bit exact, including signed zero and extremes") {
    testing::TempDir tmp("gp");
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GridField f = make_field(VariableId::tas, 7, 3, 5, seed);
        f.values[0] = -0.0f;
        f.values[1] = std::numeric_limits<float>::denorm_min();
        f.values[2] = std::numeric_limits<float>::max();
        f.values[3] = -std::numeric_limits<float>::lowest();
        save_gridpack(f, tmp / "rt");
        const GridField g = load_gridpack(tmp / "rt");
        REQUIRE(g.values.size() == f.values.size());
        bool identical = true;
        for (std::size_t k = 0; k < f.values.size(); ++k) {
            identical = identical && std::bit_cast<std::uint32_t>(f.values[k]) == std::bit_cast<std::uint32_t>(g.values[k]);
        }
        CHECK(identical);
        CHECK(g.axes == f.axes);
        CHECK(g.variable == f.variable);
        CHECK(std::signbit(g.values[0]));
    }
}

TEST_CASE("write creates meta and payload with the declared shape") {
    testing::TempDir tmp("gp");
    const GridField f = make_field(VariableId::rsds, 2, 2, 2, 1);
    save_gridpack(f, tmp / "out");
    CHECK(std::filesystem::exists(tmp / "out" / "meta.json"));
    CHECK(std::filesystem::file_size(tmp / "out" / "data.f32le") == 8 * sizeof(float));
    std::ifstream in(tmp / "out" / "meta.json");
    const auto meta = nlohmann::json::parse(in);
    CHECK(meta.at("n_time") == 2);
    CHECK(meta.at("units") == "W/m²");
}

TEST_CASE("unwritable destination is IoError") {
    testing::TempDir tmp("gp");
    std::ofstream(tmp / "plain_file") << "x";
    try {
        save_gridpack(make_field(VariableId::tas, 1, 1, 1, 0), tmp / "plain_file" / "sub");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

TEST_CASE("wrong units are rejected on load") {
    testing::TempDir tmp("gp");
    Raster r{"tas", "degC", make_field(VariableId::tas, 1, 2, 2, 0).axes, std::vector<float>(4, 1.0f)};
    save_raster(r, tmp / "bad");
    try {
        load_gridpack(tmp / "bad");
        FAIL("expected UnitError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnitError);
    }
    CHECK_THROWS_AS(parse_variable("pr"), Error);
}

TEST_CASE("axes must be strictly monotone") {
    GridAxes a;
    a.n_time = 1;
    a.lats = {50.0, 50.0};
    a.lons = {9.0};
    try {
        validate_axes(a);
        FAIL("expected NonMonotoneAxis");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonMonotoneAxis);
    }
}

TEST_CASE("coarsen on constants and a 2x2 block") {
    GridField c = make_field(VariableId::tas, 4, 4, 4, 0);
    std::fill(c.values.begin(), c.values.end(), 3.25f);
    for (CoarsenSpec s : {CoarsenSpec{1, 1}, CoarsenSpec{2, 2}, CoarsenSpec{4, 4}}) {
        const GridField g = coarsen(c, s);
        for (float v : g.values) CHECK(v == 3.25f);
    }
    const std::vector<double> block{1, 2, 3, 4};
    const auto m = block_mean(block, 1, 2, 2, {2, 1});
    REQUIRE(m.size() == 1);
    CHECK(m[0] == 2.5);
}

TEST_CASE("coarsen matches the nested-loop oracle on random 8x8x8 data") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(512);
    for (double& x : v) x = u(rng);
    const auto got = block_mean(v, 8, 8, 8, {4, 4});
    const auto want = oracle::block_mean(v, 8, 8, 8, 4, 4);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-6));
}

TEST_CASE("coarsen preserves the grand mean and is the identity at (1,1)") {
    const GridField f = make_field(VariableId::tas, 8, 4, 6, 9);
    const GridField g = coarsen(f, {2, 4});
    double mf = 0.0, mg = 0.0;
    for (float x : f.values) mf += x;
    for (float x : g.values) mg += x;
    mf /= double(f.values.size());
    mg /= double(g.values.size());
    CHECK(std::abs(mf - mg) <= 1e-6 * std::abs(mf));
    CHECK(g.axes.n_time == 2);
    CHECK(g.axes.n_lat() == 2);
    CHECK(g.axes.lats[0] == doctest::Approx(47.125));
    CHECK(g.axes.time_step_s == 4 * 21600);

    const GridField id = coarsen(f, {1, 1});
    CHECK(id.values == f.values);
    CHECK(id.axes == f.axes);
}

TEST_CASE("non-divisible shapes are rejected") {
    const GridField f = make_field(VariableId::tas, 6, 4, 4, 0);
    for (CoarsenSpec s : {CoarsenSpec{3, 1}, CoarsenSpec{1, 4}, CoarsenSpec{0, 1}}) {
        try {
            coarsen(f, s);
            FAIL("expected NonDivisibleShape");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonDivisibleShape);
        }
    }
}
