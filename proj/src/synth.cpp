#include "flaute/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "flaute/error.hpp"
#include "flaute/flowdown.hpp"

namespace flaute {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double day_of_year(EpochSeconds t) {
    const CivilTime c = to_civil(t);
    const EpochSeconds jan1 = from_civil({c.year, 1, 1});
    return double(t - jan1) / double(kSecondsPerDay);
}

// Clear-sky global horizontal irradiance from solar elevation.
double clear_sky_ghi(double lat_deg, double lon_deg, EpochSeconds t) {
    const double doy = day_of_year(t);
    const double decl = 23.44 * std::numbers::pi / 180.0 * std::sin(kTwoPi * (doy - 80.0) / 365.25);
    const double utc_hours = double(((t % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay) / 3600.0;
    const double solar_hours = utc_hours + lon_deg / 15.0;
    const double hour_angle = (solar_hours - 12.0) * std::numbers::pi / 12.0;
    const double lat = lat_deg * std::numbers::pi / 180.0;
    const double sin_el = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
    if (sin_el <= 0.0) return 0.0;
    return 1361.0 * sin_el * std::pow(0.7, std::pow(1.0 / sin_el, 0.678));
}

}  // namespace

WeatherSet synth_weather(const SynthConfig& cfg) {
    if (cfg.years < 1 || cfg.n_lat < 2 || cfg.n_lon < 1) {
        throw Error(ErrorCode::InvalidArgument, "synthetic grid needs >= 1 year, >= 2 rows and >= 1 column");
    }
    GridAxes axes;
    axes.time_start = from_civil({cfg.start_year, 1, 1});
    axes.time_step_s = cfg.time_step_s;
    axes.n_time = std::size_t((from_civil({cfg.start_year + cfg.years, 1, 1}) - axes.time_start) / cfg.time_step_s);
    for (std::size_t i = 0; i < cfg.n_lat; ++i) axes.lats.push_back(cfg.lat0 + double(i) * cfg.spacing_deg);
    for (std::size_t j = 0; j < cfg.n_lon; ++j) axes.lons.push_back(cfg.lon0 + double(j) * cfg.spacing_deg);
    validate_axes(axes);

    WeatherSet w{GridField{VariableId::uas, axes, std::vector<float>(axes.size())},
                   GridField{VariableId::vas, axes, std::vector<float>(axes.size())},
                   GridField{VariableId::tas, axes, std::vector<float>(axes.size())},
                   GridField{VariableId::rsds, axes, std::vector<float>(axes.size())}};

    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t nc = axes.n_cell();
    const double phi = cfg.wind_regime_phi;
    const double regime_innov = std::sqrt(1.0 - phi * phi);
    const double cell_phi = 0.8;
    const double cell_innov = cfg.wind_cell_sigma * std::sqrt(1.0 - cell_phi * cell_phi);
    const double dir_phi = 0.9;
    double regime = normal(rng);  // unit variance, scaled per season below
    double direction = kTwoPi * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cloud = 0.0;
    double temp_anom = 0.0;
    std::vector<double> cell(nc, 0.0);

    for (std::size_t t = 0; t < axes.n_time; ++t) {
        const EpochSeconds ts = axes.time(t);
        const double doy = day_of_year(ts);
        // Winter maximum of wind around mid-January.
        const double season = std::cos(kTwoPi * (doy - 15.0) / 365.25);
        const double mean_speed = cfg.wind_mean_ms * (1.0 + cfg.wind_winter_amplitude * season);
        // Peaks at the winter solstice and decays over about two months.
        const double dark = std::exp(5.0 * (std::cos(kTwoPi * (doy - 350.0) / 365.25) - 1.0));
        // Persistent calm spells are likelier in deep winter: wider log-speed spread.
        const double sigma = cfg.wind_regime_sigma * (1.0 + cfg.wind_winter_spread * dark);
        const double log_bias = 0.5 * (sigma * sigma + cfg.wind_cell_sigma * cfg.wind_cell_sigma);
        regime = phi * regime + regime_innov * normal(rng);
        direction += 0.3 * normal(rng);
        cloud = cfg.cloud_phi * cloud + std::sqrt(1.0 - cfg.cloud_phi * cfg.cloud_phi) * normal(rng);
        temp_anom = 0.95 * temp_anom + std::sqrt(1.0 - 0.95 * 0.95) * 2.5 * normal(rng);
        // Cloudier and more variable in winter; transmittance in [0.1, 1].
        const double cloud_mean = 0.35 + 0.1 * season + 0.25 * dark;
        const double transmittance = std::clamp(1.0 - cloud_mean - (0.15 + 0.05 * dark) * cloud, 0.1, 1.0);
        const double utc_hour = double(hour_of_day(ts));

        for (std::size_t i = 0; i < axes.n_lat(); ++i) {
            const bool sea = i + 1 == axes.n_lat();
            for (std::size_t j = 0; j < axes.n_lon(); ++j) {
                const std::size_t c = i * axes.n_lon() + j;
                cell[c] = cell_phi * cell[c] + cell_innov * normal(rng);
                double speed = mean_speed * std::exp(sigma * regime + cell[c] - log_bias);
                if (sea) speed *= cfg.sea_speedup;
                const double theta = direction + dir_phi * 0.1 * double(j);
                const std::size_t k = axes.index(t, i, j);
                w.uas.values[k] = float(speed * std::cos(theta));
                w.vas.values[k] = float(speed * std::sin(theta));

                const double lat = axes.lats[i], lon = axes.lons[j];
                const double ghi = clear_sky_ghi(lat, lon, ts) * transmittance;
                w.rsds.values[k] = float(ghi);

                const double tas = 282.0 - 8.0 * season - 0.6 * (lat - cfg.lat0) +
                                   3.0 * std::cos(kTwoPi * (utc_hour + lon / 15.0 - 15.0) / 24.0) + temp_anom;
                w.tas.values[k] = float(tas);
            }
        }
    }
    return w;
}

std::vector<LonLat> synth_land_polygon(const SynthConfig& cfg) {
    const double h = 0.5 * cfg.spacing_deg;
    const double west = cfg.lon0 - h;
    const double east = cfg.lon0 + double(cfg.n_lon - 1) * cfg.spacing_deg + h;
    const double south = cfg.lat0 - h;
    const double north = cfg.lat0 + double(cfg.n_lat - 2) * cfg.spacing_deg + h;
    return {{west, south}, {east, south}, {east, north}, {west, north}};
}

std::vector<LonLat> synth_sea_polygon(const SynthConfig& cfg) {
    const double h = 0.5 * cfg.spacing_deg;
    const double west = cfg.lon0 - h;
    const double east = cfg.lon0 + double(cfg.n_lon - 1) * cfg.spacing_deg + h;
    const double south = cfg.lat0 + double(cfg.n_lat - 2) * cfg.spacing_deg + h;
    const double north = cfg.lat0 + double(cfg.n_lat - 1) * cfg.spacing_deg + h;
    return {{west, south}, {east, south}, {east, north}, {west, north}};
}

}  // namespace flaute
