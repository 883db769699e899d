#include "flaute/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "flaute/error.hpp"

namespace flaute {

RollingStats rolling_decadal(std::span<const double> yearly, std::size_t window_years) {
    if (window_years < 2) throw Error(ErrorCode::InvalidArgument, "window must span at least two years");
    if (yearly.size() < window_years) {
        throw Error(ErrorCode::InsufficientSpan, std::to_string(yearly.size()) + " years given, window needs " +
                                                     std::to_string(window_years));
    }
    RollingStats r;
    const std::size_t n_out = yearly.size() - window_years + 1;
    r.mean.resize(n_out);
    r.std.resize(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < window_years; ++m) s += yearly[k + m];
        const double mean = s / double(window_years);
        double ss = 0.0;
        for (std::size_t m = 0; m < window_years; ++m) ss += (yearly[k + m] - mean) * (yearly[k + m] - mean);
        r.mean[k] = mean;
        r.std[k] = std::sqrt(ss / double(window_years - 1));
    }
    return r;
}

std::vector<std::array<double, 3>> cell_mixing_weights(const GridAxes& axes, const RiskMapConfig& cfg) {
    const std::size_t nc = axes.n_cell();
    if (cfg.land && cfg.land->fractions.size() != nc) {
        throw Error(ErrorCode::AxisMismatch, "land mask grid differs from CF grid");
    }
    if (cfg.mixing == CellMixing::resource_proportional) {
        if (!cfg.layout) throw Error(ErrorCode::InvalidArgument, "resource-proportional mixing needs a layout");
        if (cfg.layout->lats != axes.lats || cfg.layout->lons != axes.lons) {
            throw Error(ErrorCode::AxisMismatch, "layout grid differs from CF grid");
        }
    }
    std::vector<std::array<double, 3>> w(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        std::array<double, 3> cw{};
        double sum = 0.0;
        if (cfg.mixing == CellMixing::resource_proportional) {
            for (std::size_t k = 0; k < 3; ++k) {
                cw[k] = cfg.layout->capacity_gw[k][c];
                sum += cw[k];
            }
        }
        if (!(sum > 0.0)) {
            const bool sea = cfg.land && cfg.land->fractions[c] < 0.5;
            for (Technology tech : kTechnologies) {
                const auto k = std::size_t(tech);
                const bool eligible = tech == Technology::solar_pv ||
                                      (tech == Technology::offshore_wind ? sea : !sea);
                cw[k] = eligible ? cfg.national_shares[k] : 0.0;
            }
            sum = cw[0] + cw[1] + cw[2];
        }
        if (!(sum > 0.0)) throw Error(ErrorCode::ZeroResource, "cell " + std::to_string(c) + " has no technology");
        for (double& x : cw) x /= sum;
        w[c] = cw;
    }
    return w;
}

RiskMap pixel_risk_map(std::span<const CfField> fields, const RiskMapConfig& cfg, Period period) {
    if (fields.empty()) throw Error(ErrorCode::AxisMismatch, "no CF fields given");
    std::array<const CfField*, 3> by_tech{};
    for (const CfField& f : fields) {
        if (!(f.axes == fields[0].axes)) throw Error(ErrorCode::AxisMismatch, "CF fields do not share axes");
        by_tech[std::size_t(f.technology)] = &f;
    }
    const GridAxes& axes = fields[0].axes;
    const auto weights = cell_mixing_weights(axes, cfg);
    const std::size_t nc = axes.n_cell();

    RiskMap map{axes.lats, axes.lons, std::vector<int>(nc, 0), period};
    CfSeries cell{axes.time_start, axes.time_step_s, std::vector<double>(axes.n_time)};
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t k = 0; k < 3; ++k) {
            if (weights[c][k] != 0.0 && !by_tech[k]) {
                throw Error(ErrorCode::AxisMismatch,
                            "missing CF field for " + std::string(technology_name(Technology(k))));
            }
        }
        for (std::size_t t = 0; t < axes.n_time; ++t) {
            double v = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                if (weights[c][k] != 0.0) v += weights[c][k] * by_tech[k]->values[t * nc + c];
            }
            cell.values[t] = std::clamp(v, 0.0, 1.0);
        }
        for (const Event& e : detect_events(cell, cfg.detection, SeriesKind::raw)) {
            if (e.start >= period.start && e.start < period.end) ++map.counts[c];
        }
    }
    return map;
}

EnsembleSummary ensemble_stats(std::span<const std::vector<double>> members) {
    if (members.size() < 2) throw Error(ErrorCode::TooFewMembers, "ensemble statistics need >= 2 members");
    const std::size_t n = members[0].size();
    for (const auto& m : members) {
        if (m.size() != n) throw Error(ErrorCode::AxisMismatch, "ensemble members differ in size");
    }
    EnsembleSummary s;
    s.mean.assign(n, 0.0);
    s.std.assign(n, 0.0);
    s.max.assign(n, -std::numeric_limits<double>::infinity());
    s.min.assign(n, std::numeric_limits<double>::infinity());
    // Fixed member order keeps the reduction bit-stable.
    for (const auto& m : members) {
        for (std::size_t i = 0; i < n; ++i) {
            s.mean[i] += m[i];
            s.max[i] = std::max(s.max[i], m[i]);
            s.min[i] = std::min(s.min[i], m[i]);
        }
    }
    const double inv = 1.0 / double(members.size());
    for (double& v : s.mean) v *= inv;
    for (const auto& m : members) {
        for (std::size_t i = 0; i < n; ++i) s.std[i] += (m[i] - s.mean[i]) * (m[i] - s.mean[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        s.std[i] = std::sqrt(s.std[i] / double(members.size() - 1));
        // Rounding in the mean must not leave a spurious spread for equal members.
        if (s.max[i] == s.min[i]) {
            s.std[i] = 0.0;
            s.mean[i] = s.max[i];
        }
        s.mean[i] = std::clamp(s.mean[i], s.min[i], s.max[i]);
    }
    return s;
}

EnsembleSummary ensemble_stats(std::span<const RiskMap> members) {
    std::vector<std::vector<double>> v;
    for (const RiskMap& m : members) {
        if (!v.empty() && (m.lats != members[0].lats || m.lons != members[0].lons)) {
            throw Error(ErrorCode::AxisMismatch, "risk maps are on different grids");
        }
        v.emplace_back(m.counts.begin(), m.counts.end());
    }
    return ensemble_stats(std::span<const std::vector<double>>(v));
}

std::vector<double> events_per_decade(const RiskMap& m) {
    const double years = m.period.years();
    if (!(years > 0.0)) throw Error(ErrorCode::InvalidArgument, "risk map period is empty");
    std::vector<double> out(m.counts.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = double(m.counts[i]) * 10.0 / years;
    return out;
}

SignedMap difference_map(const RiskMap& a, const RiskMap& b) {
    if (a.lats != b.lats || a.lons != b.lons) throw Error(ErrorCode::AxisMismatch, "risk maps differ in grid");
    const auto na = events_per_decade(a);
    const auto nb = events_per_decade(b);
    SignedMap d{a.lats, a.lons, std::vector<double>(na.size())};
    for (std::size_t i = 0; i < na.size(); ++i) d.values[i] = na[i] - nb[i];
    return d;
}

TrendResult trend_test(std::span<const double> yearly, double alpha) {
    const std::size_t n = yearly.size();
    if (n < 3) throw Error(ErrorCode::InsufficientSpan, "trend test needs at least 3 points");
    const double xm = double(n - 1) / 2.0;
    double ym = 0.0;
    for (double y : yearly) ym += y;
    ym /= double(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = double(i) - xm;
        sxx += dx * dx;
        sxy += dx * (yearly[i] - ym);
    }
    TrendResult r;
    r.slope = sxy / sxx;
    const double intercept = ym - r.slope * xm;
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = yearly[i] - (intercept + r.slope * double(i));
        sse += e * e;
        sst += (yearly[i] - ym) * (yearly[i] - ym);
    }
    const double dof = double(n - 2);
    // Residuals at rounding level relative to the total variance count as an
    // exact fit.
    const bool exact_fit = sse <= 1e-24 * std::max(sst, 1.0) || sse == 0.0;
    if (exact_fit) {
        if (r.slope == 0.0 || sst == 0.0) {
            r.slope = 0.0;
            r.t_statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), r.slope);
            r.p_value = 0.0;
        }
    } else {
        const double se = std::sqrt(sse / dof / sxx);
        r.t_statistic = r.slope / se;
        const boost::math::students_t dist(dof);
        r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
    }
    r.significant = r.p_value < alpha;
    return r;
}

void write_risk_csv(const RiskMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "lat,lon,count\n";
    for (std::size_t i = 0; i < map.lats.size(); ++i) {
        for (std::size_t j = 0; j < map.lons.size(); ++j) {
            out << format_double(map.lats[i]) << ',' << format_double(map.lons[j]) << ','
                << map.counts[i * map.lons.size() + j] << '\n';
        }
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void save_risk_gridpack(const RiskMap& map, const std::filesystem::path& dir, const nlohmann::json& extra) {
    Raster r;
    r.variable = "risk_count";
    r.units = "events";
    r.axes.time_start = map.period.start;
    r.axes.time_step_s = kSecondsPerDay;
    r.axes.n_time = 1;
    r.axes.lats = map.lats;
    r.axes.lons = map.lons;
    r.values.assign(map.counts.begin(), map.counts.end());
    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["period_start_epoch_s"] = map.period.start;
    meta["period_end_epoch_s"] = map.period.end;
    save_raster(r, dir, meta);
}

RiskMap load_risk_gridpack(const std::filesystem::path& dir) {
    Raster r = load_raster(dir);
    if (r.variable != "risk_count" || r.axes.n_time != 1) {
        throw Error(ErrorCode::MetaMismatch, dir.string() + " is not a risk-map gridpack");
    }
    std::ifstream in(dir / "meta.json");
    const auto meta = nlohmann::json::parse(in);
    RiskMap m;
    m.lats = r.axes.lats;
    m.lons = r.axes.lons;
    for (float v : r.values) m.counts.push_back(int(std::lround(v)));
    try {
        m.period.start = meta.at("period_start_epoch_s").get<EpochSeconds>();
        m.period.end = meta.at("period_end_epoch_s").get<EpochSeconds>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MetaMismatch, dir.string() + ": " + e.what());
    }
    return m;
}

}  // namespace flaute
