#include "flaute/biascorrect.hpp"

#include <algorithm>
#include <cmath>

#include "flaute/error.hpp"

namespace flaute {

double empirical_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw Error(ErrorCode::EmptySample, "cannot take a quantile of an empty sample");
    const double pos = std::clamp(p, 0.0, 1.0) * double(sorted.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - double(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

QuantileMap fit_quantile_map(std::span<const double> model_ref, std::span<const double> obs_ref,
                             std::size_t n_quantiles) {
    if (n_quantiles < 2) throw Error(ErrorCode::InvalidArgument, "n_quantiles must be >= 2");
    if (model_ref.empty() || obs_ref.empty()) throw Error(ErrorCode::EmptySample, "reference sample is empty");
    std::vector<double> a(model_ref.begin(), model_ref.end());
    std::vector<double> b(obs_ref.begin(), obs_ref.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    QuantileMap m;
    m.levels.resize(n_quantiles);
    m.source_quantiles.resize(n_quantiles);
    m.target_quantiles.resize(n_quantiles);
    for (std::size_t q = 0; q < n_quantiles; ++q) {
        const double p = double(q) / double(n_quantiles - 1);
        m.levels[q] = p;
        m.source_quantiles[q] = empirical_quantile(a, p);
        m.target_quantiles[q] = empirical_quantile(b, p);
    }
    // Interpolated quantiles of a sorted sample are already nondecreasing up to
    // rounding; enforce it so the transfer function stays monotone.
    for (std::size_t q = 1; q < n_quantiles; ++q) {
        m.source_quantiles[q] = std::max(m.source_quantiles[q], m.source_quantiles[q - 1]);
        m.target_quantiles[q] = std::max(m.target_quantiles[q], m.target_quantiles[q - 1]);
    }
    return m;
}

double QuantileMap::operator()(double x) const {
    const auto& src = source_quantiles;
    const auto& tgt = target_quantiles;
    const std::size_t n = src.size();
    if (x < src.front()) return std::min(x + (tgt.front() - src.front()), tgt.front());
    // Last knot with src[idx] <= x.
    const std::size_t idx = std::size_t(std::upper_bound(src.begin(), src.end(), x) - src.begin()) - 1;
    if (idx + 1 >= n) return std::max(x + (tgt.back() - src.back()), tgt.back());
    const double frac = (x - src[idx]) / (src[idx + 1] - src[idx]);
    return std::clamp(tgt[idx] + frac * (tgt[idx + 1] - tgt[idx]), tgt[idx], tgt[idx + 1]);
}

std::vector<double> apply_quantile_map(const QuantileMap& map, std::span<const double> x) {
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return map(v); });
    return out;
}

nlohmann::json to_json(const QuantileMap& map) {
    return {{"levels", map.levels}, {"source_quantiles", map.source_quantiles}, {"target_quantiles", map.target_quantiles}};
}

QuantileMap quantile_map_from_json(const nlohmann::json& j) {
    QuantileMap m;
    try {
        m.levels = j.at("levels").get<std::vector<double>>();
        m.source_quantiles = j.at("source_quantiles").get<std::vector<double>>();
        m.target_quantiles = j.at("target_quantiles").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("quantile map: ") + e.what());
    }
    if (m.levels.size() < 2 || m.source_quantiles.size() != m.levels.size() ||
        m.target_quantiles.size() != m.levels.size()) {
        throw Error(ErrorCode::ParseError, "quantile map vectors must have equal length >= 2");
    }
    for (std::size_t q = 1; q < m.levels.size(); ++q) {
        if (m.source_quantiles[q] < m.source_quantiles[q - 1] || m.target_quantiles[q] < m.target_quantiles[q - 1]) {
            throw Error(ErrorCode::ParseError, "quantile map is not nondecreasing");
        }
    }
    return m;
}

namespace {

std::size_t n_strata(const QmConfig& cfg) { return cfg.stratify == QmStratify::month ? 12 : 1; }

std::size_t stratum_of(const QmConfig& cfg, EpochSeconds t) {
    return cfg.stratify == QmStratify::month ? std::size_t(month_of(t) - 1) : 0;
}

// samples[stratum * n_slots + slot]
std::vector<std::vector<double>> gather(const GridField& f, const QmConfig& cfg) {
    const std::size_t nc = f.axes.n_cell();
    const std::size_t slots = cfg.mode == QmMode::per_cell ? nc : 1;
    std::vector<std::vector<double>> out(n_strata(cfg) * slots);
    for (std::size_t t = 0; t < f.axes.n_time; ++t) {
        const std::size_t s = stratum_of(cfg, f.axes.time(t));
        for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t slot = cfg.mode == QmMode::per_cell ? c : 0;
            out[s * slots + slot].push_back(double(f.values[t * nc + c]));
        }
    }
    return out;
}

}  // namespace

FieldCorrection fit_field_correction(const GridField& model_ref, const GridField& obs_ref, const QmConfig& cfg) {
    if (cfg.mode == QmMode::per_cell && !model_ref.axes.same_space(obs_ref.axes)) {
        throw Error(ErrorCode::AxisMismatch, "per-cell correction requires identical grids");
    }
    if (model_ref.variable != obs_ref.variable) {
        throw Error(ErrorCode::UnitError, "model and reference variables differ");
    }
    const auto model_samples = gather(model_ref, cfg);
    const auto obs_samples = gather(obs_ref, cfg);
    FieldCorrection corr{cfg, model_ref.axes.n_lat(), model_ref.axes.n_lon(), {}};
    corr.maps.resize(model_samples.size());
    for (std::size_t k = 0; k < model_samples.size(); ++k) {
        if (model_samples[k].empty()) continue;
        if (obs_samples[k].empty()) {
            throw Error(ErrorCode::EmptySample, "reference has no samples for stratum " + std::to_string(k));
        }
        corr.maps[k] = fit_quantile_map(model_samples[k], obs_samples[k], cfg.n_quantiles);
    }
    return corr;
}

GridField apply_field_correction(const FieldCorrection& corr, const GridField& field) {
    const std::size_t nc = field.axes.n_cell();
    const bool per_cell = corr.config.mode == QmMode::per_cell;
    if (per_cell && (field.axes.n_lat() != corr.n_lat || field.axes.n_lon() != corr.n_lon)) {
        throw Error(ErrorCode::AxisMismatch, "field grid differs from fitted grid");
    }
    const std::size_t slots = per_cell ? nc : 1;
    GridField out = field;
    for (std::size_t t = 0; t < field.axes.n_time; ++t) {
        const std::size_t s = stratum_of(corr.config, field.axes.time(t));
        for (std::size_t c = 0; c < nc; ++c) {
            const QuantileMap& m = corr.maps[s * slots + (per_cell ? c : 0)];
            if (m.levels.empty()) {
                throw Error(ErrorCode::EmptySample, "no fitted map for month " + std::to_string(s + 1));
            }
            const std::size_t k = t * nc + c;
            out.values[k] = float(m(double(field.values[k])));
        }
    }
    return out;
}

GridField correct_field(const GridField& field, const GridField& ref, const QmConfig& cfg) {
    return apply_field_correction(fit_field_correction(field, ref, cfg), field);
}

nlohmann::json to_json(const FieldCorrection& corr) {
    nlohmann::json maps = nlohmann::json::array();
    for (const auto& m : corr.maps) maps.push_back(m.levels.empty() ? nlohmann::json(nullptr) : to_json(m));
    return {{"mode", corr.config.mode == QmMode::per_cell ? "per_cell" : "pooled"},
            {"stratify", corr.config.stratify == QmStratify::month ? "month" : "none"},
            {"n_quantiles", corr.config.n_quantiles},
            {"n_lat", corr.n_lat},
            {"n_lon", corr.n_lon},
            {"maps", maps}};
}

}  // namespace flaute
