#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "flaute/gridstore.hpp"

namespace flaute {

/// Matched empirical quantiles at evenly spaced probability levels (inclusive
/// endpoints). Both quantile vectors are nondecreasing.
struct QuantileMap {
    std::vector<double> levels;
    std::vector<double> source_quantiles;
    std::vector<double> target_quantiles;

    std::size_t n_quantiles() const { return levels.size(); }
    /// Piecewise-linear transfer; outside the source range the edge offset
    /// (target - source) is carried over. Nondecreasing in x.
    double operator()(double x) const;
};

/// Linear-interpolation quantile of an ascending sample (numpy "linear").
double empirical_quantile(std::span<const double> sorted, double p);

/// Throws EmptySample for an empty sample, InvalidArgument for n_quantiles < 2.
QuantileMap fit_quantile_map(std::span<const double> model_ref, std::span<const double> obs_ref,
                             std::size_t n_quantiles);

std::vector<double> apply_quantile_map(const QuantileMap& map, std::span<const double> x);

nlohmann::json to_json(const QuantileMap& map);
QuantileMap quantile_map_from_json(const nlohmann::json& j);

enum class QmMode { pooled, per_cell };
enum class QmStratify { none, month };

struct QmConfig {
    QmMode mode = QmMode::pooled;
    std::size_t n_quantiles = 100;
    QmStratify stratify = QmStratify::none;
};

/// Fitted maps for a grid. maps[stratum * n_slots + slot], where slot is the
/// cell index (per_cell) or 0 (pooled) and stratum the month index 0..11
/// (month stratification) or 0. Strata without samples hold an empty map.
struct FieldCorrection {
    QmConfig config;
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;
    std::vector<QuantileMap> maps;
};

/// Fits model_ref against obs_ref. per_cell requires identical lat/lon axes
/// (AxisMismatch otherwise); time axes may differ.
FieldCorrection fit_field_correction(const GridField& model_ref, const GridField& obs_ref, const QmConfig& cfg);
GridField apply_field_correction(const FieldCorrection& corr, const GridField& field);

/// Fit on `field` against `ref`, then apply to `field`.
GridField correct_field(const GridField& field, const GridField& ref, const QmConfig& cfg);

nlohmann::json to_json(const FieldCorrection& corr);

}  // namespace flaute
