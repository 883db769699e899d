#include "flaute/powermodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flaute/error.hpp"

namespace flaute {

std::string_view technology_name(Technology t) {
    switch (t) {
        case Technology::onshore_wind: return "onshore_wind";
        case Technology::offshore_wind: return "offshore_wind";
        case Technology::solar_pv: return "solar_pv";
    }
    return "?";
}

Technology parse_technology(std::string_view name) {
    for (Technology t : kTechnologies) {
        if (technology_name(t) == name) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown technology '" + std::string(name) + "'");
}

void validate(const TurbineParams& p) {
    if (!(p.hub_height_m > 0.0)) throw Error(ErrorCode::InvalidParams, "hub height must be positive");
    if (!(p.roughness_m > 0.0 && p.roughness_m < 10.0)) {
        throw Error(ErrorCode::InvalidRoughness, "roughness length must lie in (0, 10) m, got " +
                                                     std::to_string(p.roughness_m));
    }
    if (!(0.0 < p.cut_in_ms && p.cut_in_ms < p.rated_ms && p.rated_ms < p.cut_out_ms)) {
        throw Error(ErrorCode::InvalidParams, "power curve requires 0 < cut_in < rated < cut_out");
    }
}

void validate(const PvParams& p) {
    if (!(p.g_stc_wm2 > 0.0)) throw Error(ErrorCode::InvalidParams, "g_stc must be positive");
    if (!(p.temp_coeff_per_k <= 0.0)) throw Error(ErrorCode::InvalidParams, "temp_coeff must be <= 0");
    if (!(p.noct_coeff_k_m2_per_w >= 0.0)) throw Error(ErrorCode::InvalidParams, "noct_coeff must be >= 0");
}

namespace {

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
    if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, std::string_view where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) {
            throw Error(ErrorCode::ParseError, "unknown key '" + it.key() + "' in " + std::string(where));
        }
    }
}

TurbineParams turbine_from_json(const nlohmann::json& obj, TurbineParams p, std::string_view where) {
    check_keys(obj, {"hub_height_m", "roughness_m", "cut_in_ms", "rated_ms", "cut_out_ms"}, where);
    read_field(obj, "hub_height_m", p.hub_height_m);
    read_field(obj, "roughness_m", p.roughness_m);
    read_field(obj, "cut_in_ms", p.cut_in_ms);
    read_field(obj, "rated_ms", p.rated_ms);
    read_field(obj, "cut_out_ms", p.cut_out_ms);
    validate(p);
    return p;
}

nlohmann::json turbine_to_json(const TurbineParams& p) {
    return {{"hub_height_m", p.hub_height_m},
            {"roughness_m", p.roughness_m},
            {"cut_in_ms", p.cut_in_ms},
            {"rated_ms", p.rated_ms},
            {"cut_out_ms", p.cut_out_ms}};
}

void require_same_axes(const GridAxes& a, const GridAxes& b, const char* what) {
    if (!(a == b)) throw Error(ErrorCode::AxisMismatch, std::string(what) + ": inputs do not share axes");
}

}  // namespace

TechParams tech_params_from_json(const nlohmann::json& j) {
    TechParams p;
    try {
        check_keys(j, {"onshore_wind", "offshore_wind", "solar_pv"}, "tech params");
        if (j.contains("onshore_wind")) p.onshore = turbine_from_json(j["onshore_wind"], p.onshore, "onshore_wind");
        if (j.contains("offshore_wind")) {
            p.offshore = turbine_from_json(j["offshore_wind"], p.offshore, "offshore_wind");
        }
        if (j.contains("solar_pv")) {
            const auto& s = j["solar_pv"];
            check_keys(s, {"g_stc_wm2", "temp_coeff_per_k", "noct_coeff_k_m2_per_w", "t_ref_k"}, "solar_pv");
            read_field(s, "g_stc_wm2", p.pv.g_stc_wm2);
            read_field(s, "temp_coeff_per_k", p.pv.temp_coeff_per_k);
            read_field(s, "noct_coeff_k_m2_per_w", p.pv.noct_coeff_k_m2_per_w);
            read_field(s, "t_ref_k", p.pv.t_ref_k);
            validate(p.pv);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("tech params: ") + e.what());
    }
    return p;
}

nlohmann::json to_json(const TechParams& p) {
    return {{"onshore_wind", turbine_to_json(p.onshore)},
            {"offshore_wind", turbine_to_json(p.offshore)},
            {"solar_pv",
             {{"g_stc_wm2", p.pv.g_stc_wm2},
              {"temp_coeff_per_k", p.pv.temp_coeff_per_k},
              {"noct_coeff_k_m2_per_w", p.pv.noct_coeff_k_m2_per_w},
              {"t_ref_k", p.pv.t_ref_k}}}};
}

TechParams load_tech_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    try {
        return tech_params_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

double log_law_factor(double hub_height_m, double roughness_m) {
    if (!(roughness_m > 0.0 && roughness_m < 10.0)) {
        throw Error(ErrorCode::InvalidRoughness, "roughness length must lie in (0, 10) m");
    }
    return std::log(hub_height_m / roughness_m) / std::log(10.0 / roughness_m);
}

double power_curve(double s, const TurbineParams& p) {
    if (s < p.cut_in_ms || s >= p.cut_out_ms) return 0.0;
    if (s >= p.rated_ms) return 1.0;
    const double r = (s - p.cut_in_ms) / (p.rated_ms - p.cut_in_ms);
    return std::clamp(r * r * r, 0.0, 1.0);
}

double pv_capacity_factor(double g, double tas_k, const PvParams& p) {
    const double t_cell = tas_k + p.noct_coeff_k_m2_per_w * g;
    const double cf = (g / p.g_stc_wm2) * (1.0 + p.temp_coeff_per_k * (t_cell - p.t_ref_k));
    return std::clamp(cf, 0.0, 1.0);
}

ScalarField wind_speed(const GridField& u, const GridField& v) {
    require_same_axes(u.axes, v.axes, "wind_speed");
    ScalarField s{u.axes, std::vector<double>(u.values.size())};
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        s.values[k] = std::hypot(double(u.values[k]), double(v.values[k]));
    }
    return s;
}

ScalarField extrapolate_hub(const ScalarField& speed10, const TurbineParams& p) {
    const double factor = log_law_factor(p.hub_height_m, p.roughness_m);
    ScalarField out{speed10.axes, speed10.values};
    for (double& s : out.values) s *= factor;
    return out;
}

CfField wind_cf(const ScalarField& speed_hub, const TurbineParams& p, Technology tech) {
    validate(p);
    CfField cf{tech, speed_hub.axes, std::vector<double>(speed_hub.values.size())};
    for (std::size_t k = 0; k < cf.values.size(); ++k) cf.values[k] = power_curve(speed_hub.values[k], p);
    return cf;
}

CfField solar_cf(const GridField& rsds, const GridField& tas, const PvParams& p) {
    require_same_axes(rsds.axes, tas.axes, "solar_cf");
    validate(p);
    CfField cf{Technology::solar_pv, rsds.axes, std::vector<double>(rsds.values.size())};
    for (std::size_t k = 0; k < cf.values.size(); ++k) {
        cf.values[k] = pv_capacity_factor(double(rsds.values[k]), double(tas.values[k]), p);
    }
    return cf;
}

std::array<CfField, 3> capacity_factors(const WeatherSet& w, const TechParams& p) {
    const ScalarField s10 = wind_speed(w.uas, w.vas);
    return {wind_cf(extrapolate_hub(s10, p.onshore), p.onshore, Technology::onshore_wind),
            wind_cf(extrapolate_hub(s10, p.offshore), p.offshore, Technology::offshore_wind),
            solar_cf(w.rsds, w.tas, p.pv)};
}

std::vector<double> long_term_mean(const CfField& cf) {
    const std::size_t nc = cf.axes.n_cell();
    std::vector<double> m(nc, 0.0);
    for (std::size_t t = 0; t < cf.axes.n_time; ++t) {
        for (std::size_t c = 0; c < nc; ++c) m[c] += cf.values[t * nc + c];
    }
    for (double& x : m) x /= double(cf.axes.n_time);
    return m;
}

}  // namespace flaute
