#pragma once

#include <array>
#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flaute/gridstore.hpp"

namespace flaute {

enum class Technology { onshore_wind = 0, offshore_wind = 1, solar_pv = 2 };

inline constexpr std::array<Technology, 3> kTechnologies{Technology::onshore_wind, Technology::offshore_wind,
                                                         Technology::solar_pv};

std::string_view technology_name(Technology t);
Technology parse_technology(std::string_view name);

/// Generic cubic power curve plus log-law hub-height extrapolation.
struct TurbineParams {
    double hub_height_m = 100.0;
    double roughness_m = 0.1;
    double cut_in_ms = 3.0;
    double rated_ms = 13.0;
    double cut_out_ms = 25.0;

    static TurbineParams onshore() { return {}; }
    static TurbineParams offshore() { return {120.0, 0.0002, 3.0, 12.0, 25.0}; }
};

/// Linear temperature derating with a NOCT-style cell temperature
/// T_cell = tas + noct_coeff * G.
struct PvParams {
    double g_stc_wm2 = 1000.0;
    double temp_coeff_per_k = -0.005;
    double noct_coeff_k_m2_per_w = 0.035;
    double t_ref_k = 298.15;
};

void validate(const TurbineParams& p);
void validate(const PvParams& p);

struct TechParams {
    TurbineParams onshore = TurbineParams::onshore();
    TurbineParams offshore = TurbineParams::offshore();
    PvParams pv;
};

/// Keys "onshore_wind", "offshore_wind", "solar_pv"; every field optional and
/// layered over the defaults. Unknown keys are rejected with ParseError.
TechParams tech_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TechParams& p);
TechParams load_tech_params(const std::filesystem::path& path);

/// Wind speed (m/s) or any other derived scalar on a grid, double precision.
struct ScalarField {
    GridAxes axes;
    std::vector<double> values;
};

struct CfField {
    Technology technology = Technology::onshore_wind;
    GridAxes axes;
    std::vector<double> values;

    double at(std::size_t t, std::size_t i, std::size_t j) const { return values[axes.index(t, i, j)]; }
};

// Scalar kernels.
double log_law_factor(double hub_height_m, double roughness_m);
double power_curve(double speed_hub, const TurbineParams& p);
double pv_capacity_factor(double rsds_wm2, double tas_k, const PvParams& p);

ScalarField wind_speed(const GridField& u, const GridField& v);
/// Throws InvalidRoughness unless 0 < z0 < 10 m.
ScalarField extrapolate_hub(const ScalarField& speed10, const TurbineParams& p);
CfField wind_cf(const ScalarField& speed_hub, const TurbineParams& p,
                Technology tech = Technology::onshore_wind);
CfField solar_cf(const GridField& rsds, const GridField& tas, const PvParams& p);

/// The four weather variables on shared axes.
struct WeatherSet {
    GridField uas, vas, tas, rsds;
};

/// Onshore, offshore and PV capacity factors, indexed by Technology.
std::array<CfField, 3> capacity_factors(const WeatherSet& w, const TechParams& p);

/// Time mean per cell, (lat, lon) row-major.
std::vector<double> long_term_mean(const CfField& cf);

}  // namespace flaute
