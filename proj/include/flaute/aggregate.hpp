#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "flaute/powermodel.hpp"
#include "flaute/series.hpp"

namespace flaute {

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
};

/// Area share of each grid cell inside a region, (lat, lon) row-major.
struct RegionMask {
    std::vector<double> lats;
    std::vector<double> lons;
    std::vector<double> fractions;

    double at(std::size_t i, std::size_t j) const { return fractions[i * lons.size() + j]; }
};

inline constexpr int kMaskLattice = 16;

/// Fraction of a lattice x lattice grid of subcell centres falling inside the
/// polygon (even-odd rule). Cell bounds are midpoints between neighbouring
/// coordinates. A repeated closing vertex is optional. Throws
/// DegeneratePolygon for < 3 vertices, zero area, self-intersection, or a
/// polygon that covers no cell.
RegionMask mask_from_polygon(std::span<const LonLat> polygon, const std::vector<double>& lats,
                             const std::vector<double>& lons, int lattice = kMaskLattice);
RegionMask full_mask(const std::vector<double>& lats, const std::vector<double>& lons);

/// JSON array of [lon, lat] pairs.
std::vector<LonLat> load_polygon(const std::filesystem::path& path);

using PerTechnology = std::array<std::vector<double>, 3>;

struct CapacityTotals {
    std::array<double, 3> gw{};  // indexed by Technology
};

struct CapacityLayout {
    std::vector<double> lats;
    std::vector<double> lons;
    std::array<double, 3> total_gw{};
    PerTechnology capacity_gw;  // per technology, per cell
    PerTechnology weight;       // c[i,k] / sum over all cells and technologies

    double weight_sum() const;
};

/// Resource-proportional allocation, c[i,k] = C_k a_i CFbar[i,k] / sum_j a_j CFbar[j,k].
/// Onshore wind and PV use the land fractions as a_i. Offshore wind is limited
/// to cells with land fraction < 0.5 and uses the sea fraction (from `sea`, or
/// 1 - land when no sea mask is given). Throws ZeroResource when a technology
/// with positive total has no resource in its eligible cells.
CapacityLayout allocate_capacity(const PerTechnology& cf_mean, const CapacityTotals& totals,
                                 const RegionMask& land, const RegionMask* sea = nullptr);

/// CF(t) = sum_k sum_i w[i,k] CF[i,k](t). Fields are matched to layout
/// technologies by their `technology`; a technology with zero weight may be
/// absent. Throws AxisMismatch.
CfSeries combined_cf(std::span<const CfField> fields, const CapacityLayout& layout);

struct TechnologyShare {
    double share = 0.0;
    double gw = 0.0;
};

/// German installed capacity shares for 2024 (main-text figures).
std::array<TechnologyShare, 3> technology_shares_2024();

/// Named capacity configurations: "bnetza2024" (99.3/63.5/9.2 GW, default) and
/// "bnetza2024_si" (66.5/60.4/7.7 GW).
CapacityTotals capacity_totals(std::string_view config_name);

/// Columns lat,lon,technology,capacity_gw,weight.
void write_layout_csv(const CapacityLayout& layout, const std::filesystem::path& path);

}  // namespace flaute
