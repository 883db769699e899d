#pragma once

#include <cstdint>
#include <vector>

#include "flaute/aggregate.hpp"
#include "flaute/gridstore.hpp"
#include "flaute/powermodel.hpp"

namespace flaute {

/// Seasonal-cycle plus autoregressive-noise weather on a small regular grid.
/// Wind speed is log-normal: a region-wide AR(1) regime whose spread widens
/// sharply around the winter solstice, plus a weaker per-cell AR(1) term.
/// Irradiance follows solar geometry scaled by AR(1) cloudiness that is
/// thickest in deep winter. The northern-most row is treated as sea.
struct SynthConfig {
    int start_year = 2000;
    int years = 1;
    std::size_t n_lat = 4;
    std::size_t n_lon = 4;
    double lat0 = 50.0;  // southern-most cell centre
    double lon0 = 9.0;   // western-most cell centre
    double spacing_deg = 0.25;
    std::int64_t time_step_s = 21600;
    std::uint64_t seed = 0;

    double wind_mean_ms = 7.0;            // 10 m speed scale
    double wind_winter_amplitude = 0.05;  // relative, maximum mid-January
    double wind_regime_sigma = 0.2;       // log-speed regime std away from winter
    double wind_winter_spread = 4.0;      // relative widening of that std at the solstice
    double wind_regime_phi = 0.96;        // per 6 h
    double wind_cell_sigma = 0.12;
    double sea_speedup = 1.35;
    double cloud_phi = 0.9;
};

WeatherSet synth_weather(const SynthConfig& cfg);

/// Land: every row but the northern-most; sea: the northern-most row. Edges
/// lie on cell boundaries.
std::vector<LonLat> synth_land_polygon(const SynthConfig& cfg);
std::vector<LonLat> synth_sea_polygon(const SynthConfig& cfg);

}  // namespace flaute
