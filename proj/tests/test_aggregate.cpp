#include <random>

#include "doctest.h"
#include "flaute/aggregate.hpp"
#include "flaute/error.hpp"
#include "support/oracles.hpp"

using namespace flaute;

namespace {

const std::vector<double> kLats{50.0, 50.25, 50.5};
const std::vector<double> kLons{9.0, 9.25, 9.5};

std::vector<LonLat> rect(double lon0, double lat0, double lon1, double lat1) {
    return {{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}};
}

CapacityTotals onshore_only(double gw) {
    CapacityTotals t;
    t.gw[std::size_t(Technology::onshore_wind)] = gw;
    return t;
}

GridAxes axes_1xn(std::size_t n, std::size_t nt) {
    GridAxes a;
    a.n_time = nt;
    a.lats = {50.0};
    for (std::size_t j = 0; j < n; ++j) a.lons.push_back(9.0 + 0.25 * double(j));
    return a;
}

}  // namespace

TEST_CASE("polygon covering the grid gives unit fractions") {
    const RegionMask m = mask_from_polygon(rect(8.0, 49.0, 10.0, 51.0), kLats, kLons);
    for (double f : m.fractions) CHECK(f == 1.0);
}

TEST_CASE("left half of the centre cell") {
    const RegionMask m = mask_from_polygon(rect(9.125, 50.125, 9.25, 50.375), kLats, kLons);
    CHECK(m.at(1, 1) == doctest::Approx(0.5).epsilon(1.0 / 16.0));
    CHECK(m.at(0, 0) == 0.0);
    CHECK(m.at(1, 2) == 0.0);
    // Closing vertex repeated.
    auto closed = rect(9.125, 50.125, 9.25, 50.375);
    closed.push_back(closed.front());
    CHECK(mask_from_polygon(closed, kLats, kLons).fractions == m.fractions);
}

TEST_CASE("fractions lie in [0,1] for an irregular polygon") {
    const std::vector<LonLat> tri{{8.9, 49.9}, {9.6, 50.1}, {9.1, 50.6}};
    const RegionMask m = mask_from_polygon(tri, kLats, kLons);
    double total = 0.0;
    for (double f : m.fractions) {
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        total += f;
    }
    CHECK(total > 0.0);
}

TEST_CASE("degenerate polygons") {
    for (const auto& poly : {std::vector<LonLat>{{9.0, 50.0}, {9.2, 50.2}},
                             std::vector<LonLat>{{9.0, 50.0}, {9.1, 50.1}, {9.2, 50.2}},
                             std::vector<LonLat>{{9.0, 50.0}, {9.3, 50.3}, {9.3, 50.0}, {9.0, 50.3}},
                             rect(20.0, 20.0, 21.0, 21.0)}) {
        try {
            mask_from_polygon(poly, kLats, kLons);
            FAIL("expected DegeneratePolygon");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegeneratePolygon);
        }
    }
}

TEST_CASE("capacity allocation is resource proportional") {
    const GridAxes a = axes_1xn(3, 1);
    const RegionMask land = full_mask(a.lats, a.lons);
    PerTechnology means{std::vector<double>{0.2, 0.4, 0.4}, std::vector<double>(3, 0.3), std::vector<double>(3, 0.1)};
    const CapacityLayout l = allocate_capacity(means, onshore_only(10.0), land);
    const auto& c = l.capacity_gw[std::size_t(Technology::onshore_wind)];
    CHECK(c[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(c[2] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(l.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));

    PerTechnology equal{std::vector<double>{0.3, 0.3}, std::vector<double>(2, 0.3), std::vector<double>(2, 0.1)};
    const GridAxes b = axes_1xn(2, 1);
    const CapacityLayout half = allocate_capacity(equal, onshore_only(7.0), full_mask(b.lats, b.lons));
    CHECK(half.capacity_gw[0][0] == doctest::Approx(3.5));
    CHECK(half.capacity_gw[0][1] == doctest::Approx(3.5));
}

TEST_CASE("no resource for a technology with positive capacity") {
    const GridAxes a = axes_1xn(3, 1);
    PerTechnology zeros{std::vector<double>(3, 0.0), std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
    try {
        allocate_capacity(zeros, onshore_only(1.0), full_mask(a.lats, a.lons));
        FAIL("expected ZeroResource");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ZeroResource);
    }
    // Offshore needs a cell with land fraction < 0.5.
    PerTechnology ones{std::vector<double>(3, 0.3), std::vector<double>(3, 0.3), std::vector<double>(3, 0.1)};
    CHECK_THROWS_AS(allocate_capacity(ones, capacity_totals("bnetza2024"), full_mask(a.lats, a.lons)), Error);
}

TEST_CASE("offshore capacity lands only on mostly-water cells") {
    const GridAxes a = axes_1xn(3, 1);
    RegionMask land{a.lats, a.lons, {1.0, 0.6, 0.2}};
    PerTechnology means{std::vector<double>(3, 0.3), std::vector<double>(3, 0.4), std::vector<double>(3, 0.1)};
    const CapacityLayout l = allocate_capacity(means, capacity_totals("bnetza2024"), land);
    const auto& off = l.capacity_gw[std::size_t(Technology::offshore_wind)];
    CHECK(off[0] == 0.0);
    CHECK(off[1] == 0.0);
    CHECK(off[2] == doctest::Approx(9.2));
}

TEST_CASE("combined series for constant fields") {
    const GridAxes a = axes_1xn(3, 5);
    RegionMask land{a.lats, a.lons, {1.0, 0.7, 0.1}};
    PerTechnology means{std::vector<double>(3, 0.3), std::vector<double>(3, 0.4), std::vector<double>(3, 0.1)};
    const CapacityLayout l = allocate_capacity(means, capacity_totals("bnetza2024"), land);
    for (double c : {0.0, 1.0}) {
        std::vector<CfField> fields;
        for (Technology t : kTechnologies) fields.push_back({t, a, std::vector<double>(a.size(), c)});
        const CfSeries s = combined_cf(fields, l);
        REQUIRE(s.size() == 5);
        for (double v : s.values) CHECK(v == doctest::Approx(c).epsilon(1e-15));
    }
}

TEST_CASE("combined series: oracle, scale invariance and homogeneity") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GridAxes a = axes_1xn(4, 30);
    RegionMask land{a.lats, a.lons, {1.0, 0.8, 0.4, 0.0}};
    PerTechnology means;
    std::vector<CfField> fields;
    for (Technology t : kTechnologies) {
        CfField f{t, a, std::vector<double>(a.size())};
        for (double& x : f.values) x = u(rng);
        means[std::size_t(t)] = long_term_mean(f);
        fields.push_back(f);
    }
    CapacityTotals totals{{30.0, 5.0, 40.0}};
    const CapacityLayout l = allocate_capacity(means, totals, land);
    const CfSeries s = combined_cf(fields, l);
    std::vector<std::vector<double>> w(l.weight.begin(), l.weight.end()), cf;
    for (const CfField& f : fields) cf.push_back(f.values);
    const auto want = oracle::weighted_series(w, cf, a.n_time);
    for (std::size_t t = 0; t < a.n_time; ++t) CHECK(std::abs(s.values[t] - want[t]) < 1e-9);

    CapacityTotals scaled = totals;
    for (double& g : scaled.gw) g *= 3.7;
    const CfSeries s2 = combined_cf(fields, allocate_capacity(means, scaled, land));
    for (std::size_t t = 0; t < a.n_time; ++t) CHECK(s2.values[t] == doctest::Approx(s.values[t]).epsilon(1e-12));

    std::vector<double> series(a.n_time);
    for (double& x : series) x = u(rng);
    std::vector<CfField> same;
    for (Technology t : kTechnologies) {
        CfField f{t, a, std::vector<double>(a.size())};
        for (std::size_t k = 0; k < a.n_time; ++k)
            for (std::size_t c = 0; c < a.n_cell(); ++c) f.values[k * a.n_cell() + c] = series[k];
        same.push_back(f);
    }
    const CfSeries h = combined_cf(same, l);
    for (std::size_t t = 0; t < a.n_time; ++t) CHECK(h.values[t] == doctest::Approx(series[t]).epsilon(1e-14));
}

TEST_CASE("combined series rejects mismatched axes") {
    const GridAxes a = axes_1xn(2, 3);
    PerTechnology means{std::vector<double>(2, 0.3), std::vector<double>(2, 0.3), std::vector<double>(2, 0.1)};
    CapacityTotals t{{1.0, 0.0, 1.0}};
    const CapacityLayout l = allocate_capacity(means, t, full_mask(a.lats, a.lons));
    const GridAxes b = axes_1xn(3, 3);
    std::vector<CfField> fields;
    for (Technology k : kTechnologies) fields.push_back({k, b, std::vector<double>(b.size(), 0.5)});
    try {
        combined_cf(fields, l);
        FAIL("expected AxisMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AxisMismatch);
    }
}

TEST_CASE("2024 capacity shares") {
    const auto s = technology_shares_2024();
    CHECK(s[std::size_t(Technology::solar_pv)].share == 0.577);
    CHECK(s[std::size_t(Technology::solar_pv)].gw == 99.3);
    CHECK(s[std::size_t(Technology::onshore_wind)].share == 0.369);
    CHECK(s[std::size_t(Technology::onshore_wind)].gw == 63.5);
    double sum = 0.0;
    for (const auto& x : s) sum += x.share;
    CHECK(std::abs(sum - 1.0) <= 1e-3);
    CHECK(capacity_totals("bnetza2024_si").gw[std::size_t(Technology::solar_pv)] == 66.5);
    CHECK_THROWS_AS(capacity_totals("nope"), Error);
}
