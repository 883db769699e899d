#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flaute/aggregate.hpp"
#include "flaute/detect.hpp"

namespace flaute {

struct RollingStats {
    std::vector<double> mean;
    std::vector<double> std;  // sample (n-1) standard deviation
};

/// Trailing window over yearly values; n - window + 1 outputs. Throws
/// InsufficientSpan when fewer than window_years points are given.
RollingStats rolling_decadal(std::span<const double> yearly, std::size_t window_years = 10);

struct Period {
    EpochSeconds start = 0;  // inclusive
    EpochSeconds end = 0;    // exclusive

    double years() const { return double(end - start) / (365.25 * 86400.0); }
};

struct RiskMap {
    std::vector<double> lats;
    std::vector<double> lons;
    std::vector<int> counts;  // (lat, lon) row-major
    Period period;
};

/// How each cell mixes technologies into one combined CF series.
/// national_shares: w_k = national capacity share of k, restricted to the
/// technologies eligible at the cell (offshore at cells with land fraction
/// < 0.5, onshore elsewhere, PV everywhere) and renormalised.
/// resource_proportional: w_k = c[i,k] / sum_k c[i,k] from the layout, falling
/// back to national shares where the cell holds no capacity.
enum class CellMixing { national_shares, resource_proportional };

struct RiskMapConfig {
    DetectionConfig detection;
    CellMixing mixing = CellMixing::national_shares;
    std::array<double, 3> national_shares{};  // indexed by Technology
    const RegionMask* land = nullptr;         // optional; all cells are land when null
    const CapacityLayout* layout = nullptr;   // required for resource_proportional
};

/// Per-cell mixing weights, (cell, technology).
std::vector<std::array<double, 3>> cell_mixing_weights(const GridAxes& axes, const RiskMapConfig& cfg);

/// Per cell: combined CF series, then detect_events; counts events whose start
/// lies in the period.
RiskMap pixel_risk_map(std::span<const CfField> fields, const RiskMapConfig& cfg, Period period);

struct EnsembleSummary {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<double> max;
    std::vector<double> min;
};

/// Elementwise statistics across members. Throws TooFewMembers (< 2) and
/// AxisMismatch for members of different length.
EnsembleSummary ensemble_stats(std::span<const std::vector<double>> members);
EnsembleSummary ensemble_stats(std::span<const RiskMap> members);

struct SignedMap {
    std::vector<double> lats;
    std::vector<double> lons;
    std::vector<double> values;
};

/// Counts normalised to events per decade of each period, then a - b.
std::vector<double> events_per_decade(const RiskMap& m);
SignedMap difference_map(const RiskMap& a, const RiskMap& b);

struct TrendResult {
    double slope = 0.0;
    double t_statistic = 0.0;
    double p_value = 1.0;
    bool significant = false;
};

/// OLS slope against x = 0, 1, ..., n-1 with a two-sided Student t test on
/// slope = 0 (n-2 dof) at level alpha. Throws InsufficientSpan for n < 3.
TrendResult trend_test(std::span<const double> yearly, double alpha = 0.05);

/// Columns lat,lon,count.
void write_risk_csv(const RiskMap& map, const std::filesystem::path& path);
/// Counts as float32 gridpack with a single time step at period.start. The
/// period is stored in meta.json.
void save_risk_gridpack(const RiskMap& map, const std::filesystem::path& dir,
                        const nlohmann::json& extra = nlohmann::json::object());
RiskMap load_risk_gridpack(const std::filesystem::path& dir);

}  // namespace flaute
