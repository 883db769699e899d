#include "flaute/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flaute/error.hpp"

namespace flaute {

namespace {

std::vector<LonLat> open_ring(std::span<const LonLat> polygon) {
    std::vector<LonLat> ring(polygon.begin(), polygon.end());
    if (ring.size() >= 2 && ring.front().lon == ring.back().lon && ring.front().lat == ring.back().lat) {
        ring.pop_back();
    }
    return ring;
}

double cross(const LonLat& o, const LonLat& a, const LonLat& b) {
    return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

bool on_segment(const LonLat& p, const LonLat& a, const LonLat& b) {
    return std::min(a.lon, b.lon) <= p.lon && p.lon <= std::max(a.lon, b.lon) && std::min(a.lat, b.lat) <= p.lat &&
           p.lat <= std::max(a.lat, b.lat);
}

bool segments_intersect(const LonLat& p1, const LonLat& p2, const LonLat& q1, const LonLat& q2) {
    const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
    const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    if (d1 == 0 && on_segment(p1, q1, q2)) return true;
    if (d2 == 0 && on_segment(p2, q1, q2)) return true;
    if (d3 == 0 && on_segment(q1, p1, p2)) return true;
    if (d4 == 0 && on_segment(q2, p1, p2)) return true;
    return false;
}

bool point_in_ring(const std::vector<LonLat>& ring, double lon, double lat) {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const LonLat& a = ring[i];
        const LonLat& b = ring[j];
        if ((a.lat > lat) != (b.lat > lat)) {
            const double x = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if (lon < x) inside = !inside;
        }
    }
    return inside;
}

// Cell edges as midpoints between neighbouring centres.
std::vector<double> cell_edges(const std::vector<double>& axis) {
    if (axis.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "at least two coordinates are needed to infer cell bounds");
    }
    std::vector<double> e(axis.size() + 1);
    for (std::size_t i = 1; i < axis.size(); ++i) e[i] = 0.5 * (axis[i - 1] + axis[i]);
    e.front() = axis.front() - 0.5 * (axis[1] - axis[0]);
    e.back() = axis.back() + 0.5 * (axis.back() - axis[axis.size() - 2]);
    return e;
}

}  // namespace

RegionMask mask_from_polygon(std::span<const LonLat> polygon, const std::vector<double>& lats,
                             const std::vector<double>& lons, int lattice) {
    const std::vector<LonLat> ring = open_ring(polygon);
    if (ring.size() < 3) throw Error(ErrorCode::DegeneratePolygon, "polygon needs at least 3 vertices");
    if (lattice < 1) throw Error(ErrorCode::InvalidArgument, "lattice must be positive");

    double area2 = 0.0;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        area2 += ring[j].lon * ring[i].lat - ring[i].lon * ring[j].lat;
    }
    if (area2 == 0.0) throw Error(ErrorCode::DegeneratePolygon, "polygon has zero area");

    const std::size_t n = ring.size();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const bool adjacent = b == a + 1 || (a == 0 && b == n - 1);
            if (adjacent) continue;
            if (segments_intersect(ring[a], ring[(a + 1) % n], ring[b], ring[(b + 1) % n])) {
                throw Error(ErrorCode::DegeneratePolygon, "polygon edges " + std::to_string(a) + " and " +
                                                              std::to_string(b) + " intersect");
            }
        }
    }

    const std::vector<double> lat_edges = cell_edges(lats);
    const std::vector<double> lon_edges = cell_edges(lons);
    RegionMask m{lats, lons, std::vector<double>(lats.size() * lons.size(), 0.0)};
    const double per_point = 1.0 / double(lattice * lattice);
    bool any = false;
    for (std::size_t i = 0; i < lats.size(); ++i) {
        for (std::size_t j = 0; j < lons.size(); ++j) {
            int hits = 0;
            for (int a = 0; a < lattice; ++a) {
                const double lat = lat_edges[i] + (lat_edges[i + 1] - lat_edges[i]) * (a + 0.5) / lattice;
                for (int b = 0; b < lattice; ++b) {
                    const double lon = lon_edges[j] + (lon_edges[j + 1] - lon_edges[j]) * (b + 0.5) / lattice;
                    hits += point_in_ring(ring, lon, lat) ? 1 : 0;
                }
            }
            m.fractions[i * lons.size() + j] = hits * per_point;
            any = any || hits > 0;
        }
    }
    if (!any) throw Error(ErrorCode::DegeneratePolygon, "polygon covers no grid cell");
    return m;
}

RegionMask full_mask(const std::vector<double>& lats, const std::vector<double>& lons) {
    return RegionMask{lats, lons, std::vector<double>(lats.size() * lons.size(), 1.0)};
}

std::vector<LonLat> load_polygon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        std::vector<LonLat> poly;
        for (const auto& p : j) {
            if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::ParseError, "vertex must be [lon, lat]");
            poly.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        return poly;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

double CapacityLayout::weight_sum() const {
    double s = 0.0;
    for (const auto& w : weight) {
        for (double x : w) s += x;
    }
    return s;
}

CapacityLayout allocate_capacity(const PerTechnology& cf_mean, const CapacityTotals& totals,
                                 const RegionMask& land, const RegionMask* sea) {
    const std::size_t nc = land.fractions.size();
    if (sea && (sea->lats != land.lats || sea->lons != land.lons)) {
        throw Error(ErrorCode::AxisMismatch, "sea mask grid differs from land mask grid");
    }
    CapacityLayout layout;
    layout.lats = land.lats;
    layout.lons = land.lons;
    double grand_total = 0.0;
    for (Technology tech : kTechnologies) {
        const auto k = std::size_t(tech);
        const double total = totals.gw[k];
        if (!(total >= 0.0)) throw Error(ErrorCode::InvalidArgument, "capacity totals must be >= 0");
        layout.total_gw[k] = total;
        layout.capacity_gw[k].assign(nc, 0.0);
        if (total == 0.0) continue;
        if (cf_mean[k].size() != nc) {
            throw Error(ErrorCode::AxisMismatch, "mean CF for " + std::string(technology_name(tech)) +
                                                     " does not match mask size");
        }
        std::vector<double> area(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            if (tech == Technology::offshore_wind) {
                const double water = sea ? sea->fractions[c] : 1.0 - land.fractions[c];
                area[c] = land.fractions[c] < 0.5 ? water : 0.0;
            } else {
                area[c] = land.fractions[c];
            }
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < nc; ++c) denom += area[c] * cf_mean[k][c];
        if (!(denom > 0.0)) {
            throw Error(ErrorCode::ZeroResource,
                        "no resource for " + std::string(technology_name(tech)) + " in eligible cells");
        }
        for (std::size_t c = 0; c < nc; ++c) layout.capacity_gw[k][c] = total * area[c] * cf_mean[k][c] / denom;
        grand_total += total;
    }
    if (!(grand_total > 0.0)) throw Error(ErrorCode::ZeroResource, "all capacity totals are zero");

    double csum = 0.0;
    for (const auto& c : layout.capacity_gw) {
        for (double x : c) csum += x;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        layout.weight[k].resize(nc);
        for (std::size_t c = 0; c < nc; ++c) layout.weight[k][c] = layout.capacity_gw[k][c] / csum;
    }
    return layout;
}

CfSeries combined_cf(std::span<const CfField> fields, const CapacityLayout& layout) {
    const std::size_t nc = layout.lats.size() * layout.lons.size();
    std::array<const CfField*, 3> by_tech{};
    const GridAxes* time_axes = nullptr;
    for (const CfField& f : fields) {
        if (f.axes.lats != layout.lats || f.axes.lons != layout.lons) {
            throw Error(ErrorCode::AxisMismatch, "CF field grid differs from layout grid");
        }
        if (time_axes && (f.axes.time_start != time_axes->time_start ||
                          f.axes.time_step_s != time_axes->time_step_s || f.axes.n_time != time_axes->n_time)) {
            throw Error(ErrorCode::AxisMismatch, "CF fields do not share a time axis");
        }
        time_axes = &f.axes;
        by_tech[std::size_t(f.technology)] = &f;
    }
    if (!time_axes) throw Error(ErrorCode::AxisMismatch, "no CF fields given");
    for (Technology tech : kTechnologies) {
        const auto k = std::size_t(tech);
        const bool used = std::any_of(layout.weight[k].begin(), layout.weight[k].end(), [](double w) { return w != 0.0; });
        if (used && !by_tech[k]) {
            throw Error(ErrorCode::AxisMismatch, "missing CF field for " + std::string(technology_name(tech)));
        }
    }

    CfSeries out;
    out.time_start = time_axes->time_start;
    out.time_step_s = time_axes->time_step_s;
    out.values.assign(time_axes->n_time, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
        if (!by_tech[k]) continue;
        const std::vector<double>& w = layout.weight[k];
        const std::vector<double>& cf = by_tech[k]->values;
        for (std::size_t t = 0; t < out.values.size(); ++t) {
            double s = 0.0;
            const double* row = cf.data() + t * nc;
            for (std::size_t c = 0; c < nc; ++c) s += w[c] * row[c];
            out.values[t] += s;
        }
    }
    for (double& v : out.values) v = std::clamp(v, 0.0, 1.0);
    return out;
}

std::array<TechnologyShare, 3> technology_shares_2024() {
    std::array<TechnologyShare, 3> s{};
    s[std::size_t(Technology::onshore_wind)] = {0.369, 63.5};
    s[std::size_t(Technology::offshore_wind)] = {0.054, 9.2};
    s[std::size_t(Technology::solar_pv)] = {0.577, 99.3};
    return s;
}

CapacityTotals capacity_totals(std::string_view config_name) {
    CapacityTotals t;
    if (config_name == "bnetza2024") {
        for (Technology tech : kTechnologies) t.gw[std::size_t(tech)] = technology_shares_2024()[std::size_t(tech)].gw;
    } else if (config_name == "bnetza2024_si") {
        t.gw[std::size_t(Technology::onshore_wind)] = 60.4;
        t.gw[std::size_t(Technology::offshore_wind)] = 7.7;
        t.gw[std::size_t(Technology::solar_pv)] = 66.5;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown capacity config '" + std::string(config_name) + "'");
    }
    return t;
}

void write_layout_csv(const CapacityLayout& layout, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "lat,lon,technology,capacity_gw,weight\n";
    const std::size_t nlon = layout.lons.size();
    for (std::size_t i = 0; i < layout.lats.size(); ++i) {
        for (std::size_t j = 0; j < nlon; ++j) {
            for (Technology tech : kTechnologies) {
                const auto k = std::size_t(tech);
                const std::size_t c = i * nlon + j;
                out << format_double(layout.lats[i]) << ',' << format_double(layout.lons[j]) << ','
                    << technology_name(tech) << ',' << format_double(layout.capacity_gw[k][c]) << ','
                    << format_double(layout.weight[k][c]) << '\n';
            }
        }
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace flaute
