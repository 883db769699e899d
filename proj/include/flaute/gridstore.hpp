#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flaute/timeutil.hpp"

namespace flaute {

enum class VariableId { uas, vas, tas, rsds };

std::string_view variable_name(VariableId v);
std::string_view canonical_units(VariableId v);
/// Throws Error(MetaMismatch) for names outside {uas, vas, tas, rsds}.
VariableId parse_variable(std::string_view name);

/// Time, latitude and longitude coordinates of a (time, lat, lon) raster.
struct GridAxes {
    EpochSeconds time_start = 0;
    std::int64_t time_step_s = 21600;
    std::size_t n_time = 0;
    std::vector<double> lats;
    std::vector<double> lons;

    std::size_t n_lat() const { return lats.size(); }
    std::size_t n_lon() const { return lons.size(); }
    std::size_t n_cell() const { return lats.size() * lons.size(); }
    std::size_t size() const { return n_time * n_cell(); }
    EpochSeconds time(std::size_t i) const { return time_start + std::int64_t(i) * time_step_s; }
    std::size_t index(std::size_t t, std::size_t i, std::size_t j) const {
        return (t * lats.size() + i) * lons.size() + j;
    }

    bool same_space(const GridAxes& o) const { return lats == o.lats && lons == o.lons; }
    bool operator==(const GridAxes&) const = default;
};

/// Throws NonMonotoneAxis for non strictly monotone lat/lon, MetaMismatch for an
/// empty axis or a time step that does not divide one day.
void validate_axes(const GridAxes& axes);

/// One weather variable on a (time, lat, lon) grid, values row-major float32.
struct GridField {
    VariableId variable = VariableId::tas;
    GridAxes axes;
    std::vector<float> values;

    std::string_view units() const { return canonical_units(variable); }
    float at(std::size_t t, std::size_t i, std::size_t j) const { return values[axes.index(t, i, j)]; }
};

void validate(const GridField& field);

/// Generic container behind the gridpack format. Weather variables go through
/// GridField; derived products (capacity factors, risk counts) are written as
/// rasters with their own variable name.
struct Raster {
    std::string variable;
    std::string units;
    GridAxes axes;
    std::vector<float> values;
};

/// Writes `meta.json` + `data.f32le` into `dir` (created if needed). `extra`
/// keys are merged into meta.json (provenance). Throws IoError.
void save_raster(const Raster& raster, const std::filesystem::path& dir,
                 const nlohmann::json& extra = nlohmann::json::object());
/// Reads any gridpack without variable/unit checks.
Raster load_raster(const std::filesystem::path& dir);

GridField load_gridpack(const std::filesystem::path& dir);
void save_gridpack(const GridField& field, const std::filesystem::path& dir,
                   const nlohmann::json& extra = nlohmann::json::object());

struct CoarsenSpec {
    std::size_t spatial_factor = 1;
    std::size_t temporal_factor = 1;
};

/// Block mean over spatial_factor x spatial_factor cells and temporal_factor
/// consecutive steps of a dense (time, lat, lon) array. Accumulates in double.
/// Throws NonDivisibleShape.
std::vector<double> block_mean(std::span<const double> values, std::size_t n_time, std::size_t n_lat,
                               std::size_t n_lon, CoarsenSpec spec);

/// Coarsened axes: block-centroid coordinates, window-start timestamps.
GridAxes coarsen_axes(const GridAxes& axes, CoarsenSpec spec);

GridField coarsen(const GridField& field, CoarsenSpec spec);

}  // namespace flaute
