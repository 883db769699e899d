#include <cmath>
#include <random>

#include "doctest.h"
#include "flaute/error.hpp"
#include "flaute/powermodel.hpp"

using namespace flaute;

namespace {

GridField field(VariableId var, std::size_t nt, std::vector<float> values, EpochSeconds t0 = 946684800) {
    GridField f;
    f.variable = var;
    f.axes.time_start = t0;
    f.axes.n_time = nt;
    const std::size_t cells = values.size() / nt;
    f.axes.lats = {50.0};
    for (std::size_t j = 0; j < cells; ++j) f.axes.lons.push_back(9.0 + double(j));
    f.values = std::move(values);
    return f;
}

}  // namespace

TEST_CASE("wind speed magnitude") {
    const ScalarField s = wind_speed(field(VariableId::uas, 1, {0.0f, 3.0f}), field(VariableId::vas, 1, {0.0f, 4.0f}));
    CHECK(s.values[0] == 0.0);
    CHECK(s.values[1] == 5.0);
}

TEST_CASE("wind speed matches an elementwise loop") {
    std::mt19937_64 rng(3);
    std::normal_distribution<float> n(0.0f, 6.0f);
    std::vector<float> u(200), v(200);
    for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = n(rng);
        v[k] = n(rng);
    }
    const ScalarField s = wind_speed(field(VariableId::uas, 10, u), field(VariableId::vas, 10, v));
    for (std::size_t k = 0; k < u.size(); ++k) {
        CHECK(s.values[k] == doctest::Approx(std::sqrt(double(u[k]) * u[k] + double(v[k]) * v[k])).epsilon(1e-6));
    }
}

TEST_CASE("mismatched wind axes") {
    try {
        wind_speed(field(VariableId::uas, 1, {1.0f}), field(VariableId::vas, 2, {1.0f, 1.0f}));
        FAIL("expected AxisMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AxisMismatch);
    }
}

TEST_CASE("log-law hub-height extrapolation") {
    CHECK(log_law_factor(10.0, 0.1) == 1.0);
    CHECK(5.0 * log_law_factor(100.0, 0.1) == doctest::Approx(7.5).epsilon(1e-12));
    try {
        log_law_factor(100.0, 15.0);
        FAIL("expected InvalidRoughness");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidRoughness);
    }
    TurbineParams p;
    p.roughness_m = 0.0;
    const ScalarField s{field(VariableId::uas, 1, {1.0f}).axes, {5.0}};
    CHECK_THROWS_AS(extrapolate_hub(s, p), Error);
}

TEST_CASE("cubic power curve") {
    const TurbineParams p = TurbineParams::onshore();
    CHECK(power_curve(13.0, p) == 1.0);
    CHECK(power_curve(26.0, p) == 0.0);
    CHECK(power_curve(25.0, p) == 0.0);
    CHECK(power_curve(2.9, p) == 0.0);
    CHECK(power_curve(8.0, p) == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("power curve is monotone up to rated and zero past cut-out") {
    const TurbineParams p = TurbineParams::offshore();
    double prev = 0.0;
    for (double s = 0.0; s <= p.rated_ms; s += 0.01) {
        const double cf = power_curve(s, p);
        CHECK(cf >= prev);
        CHECK(cf <= 1.0);
        prev = cf;
    }
    for (double s = p.cut_out_ms; s < 60.0; s += 0.5) CHECK(power_curve(s, p) == 0.0);
}

TEST_CASE("turbine and pv parameter validation") {
    TurbineParams p;
    p.rated_ms = 2.0;
    CHECK_THROWS_AS(validate(p), Error);
    PvParams pv;
    pv.g_stc_wm2 = 0.0;
    try {
        validate(pv);
        FAIL("expected InvalidParams");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidParams);
    }
}

TEST_CASE("pv capacity factor") {
    const PvParams p;
    CHECK(pv_capacity_factor(0.0, 280.0, p) == 0.0);
    CHECK(pv_capacity_factor(1000.0, 298.15, p) == doctest::Approx(0.825).epsilon(1e-12));
    CHECK(pv_capacity_factor(2000.0, 250.0, p) == 1.0);
    double prev = 0.0;
    for (double g = 0.0; g < 1100.0; g += 5.0) {
        const double cf = pv_capacity_factor(g, 290.0, p);
        if (cf < 1.0) CHECK(cf >= prev);
        prev = cf;
    }
}

TEST_CASE("gridded capacity factors stay within [0,1]") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> speed(-40.0f, 40.0f), g(0.0f, 1400.0f), t(230.0f, 330.0f);
    std::vector<float> u(400), v(400), r(400), ta(400);
    for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = speed(rng);
        v[k] = speed(rng);
        r[k] = g(rng);
        ta[k] = t(rng);
    }
    const WeatherSet w{field(VariableId::uas, 20, u), field(VariableId::vas, 20, v), field(VariableId::tas, 20, ta),
                       field(VariableId::rsds, 20, r)};
    const auto cf = capacity_factors(w, TechParams{});
    for (Technology tech : kTechnologies) {
        CHECK(cf[std::size_t(tech)].technology == tech);
        for (double x : cf[std::size_t(tech)].values) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
}

TEST_CASE("seasonal cycles: solar peaks in summer, anticorrelated wind in winter") {
    // One year of 6-hourly samples at a single cell.
    const std::size_t nt = 365 * 4;
    std::vector<float> rsds(nt), tas(nt, 285.0f), u(nt), v(nt, 0.0f);
    for (std::size_t k = 0; k < nt; ++k) {
        const double doy = double(k) / 4.0;
        const double season = std::cos(2.0 * M_PI * (doy - 172.0) / 365.0);  // +1 late June
        rsds[k] = float(300.0 + 200.0 * season);
        u[k] = float(7.0 - 3.0 * season);
    }
    const WeatherSet w{field(VariableId::uas, nt, u), field(VariableId::vas, nt, v), field(VariableId::tas, nt, tas),
                       field(VariableId::rsds, nt, rsds)};
    const auto cf = capacity_factors(w, TechParams{});
    auto monthly = [&](const CfField& f) {
        std::array<double, 12> sum{}, n{};
        for (std::size_t t = 0; t < nt; ++t) {
            const int m = month_of(f.axes.time(t)) - 1;
            sum[m] += f.values[t];
            n[m] += 1.0;
        }
        for (int m = 0; m < 12; ++m) sum[m] /= n[m];
        return sum;
    };
    const auto solar = monthly(cf[std::size_t(Technology::solar_pv)]);
    const auto wind = monthly(cf[std::size_t(Technology::onshore_wind)]);
    const auto solar_max = std::max_element(solar.begin(), solar.end()) - solar.begin();
    const auto solar_min = std::min_element(solar.begin(), solar.end()) - solar.begin();
    const auto wind_max = std::max_element(wind.begin(), wind.end()) - wind.begin();
    CHECK((solar_max == 5 || solar_max == 6));
    CHECK((solar_min == 11 || solar_min == 0));
    CHECK((wind_max == 11 || wind_max == 0));
}

TEST_CASE("tech params json layering") {
    const TechParams p = tech_params_from_json({{"onshore_wind", {{"hub_height_m", 120.0}}}});
    CHECK(p.onshore.hub_height_m == 120.0);
    CHECK(p.onshore.rated_ms == 13.0);
    CHECK(p.offshore.hub_height_m == 120.0);
    CHECK_THROWS_AS(tech_params_from_json({{"onshore_wind", {{"hub", 1.0}}}}), Error);
    const TechParams q = tech_params_from_json(to_json(p));
    CHECK(q.onshore.hub_height_m == p.onshore.hub_height_m);
    CHECK(q.pv.temp_coeff_per_k == p.pv.temp_coeff_per_k);
}
