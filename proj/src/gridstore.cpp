#include "flaute/gridstore.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <system_error>

#include "flaute/error.hpp"

namespace fs = std::filesystem;

namespace flaute {

std::string_view variable_name(VariableId v) {
    switch (v) {
        case VariableId::uas: return "uas";
        case VariableId::vas: return "vas";
        case VariableId::tas: return "tas";
        case VariableId::rsds: return "rsds";
    }
    return "?";
}

std::string_view canonical_units(VariableId v) {
    switch (v) {
        case VariableId::uas:
        case VariableId::vas: return "m/s";
        case VariableId::tas: return "K";
        case VariableId::rsds: return "W/m²";
    }
    return "?";
}

VariableId parse_variable(std::string_view name) {
    for (VariableId v : {VariableId::uas, VariableId::vas, VariableId::tas, VariableId::rsds}) {
        if (variable_name(v) == name) return v;
    }
    throw Error(ErrorCode::MetaMismatch, "unknown variable '" + std::string(name) + "'");
}

namespace {

void check_monotone(const std::vector<double>& axis, const char* name) {
    if (axis.empty()) throw Error(ErrorCode::MetaMismatch, std::string(name) + " axis is empty");
    if (axis.size() < 2) return;
    const bool increasing = axis[1] > axis[0];
    for (std::size_t i = 1; i < axis.size(); ++i) {
        const bool ok = increasing ? axis[i] > axis[i - 1] : axis[i] < axis[i - 1];
        if (!ok || !std::isfinite(axis[i])) {
            throw Error(ErrorCode::NonMonotoneAxis, std::string(name) + " axis not strictly monotone at index " +
                                                        std::to_string(i));
        }
    }
}

}  // namespace

void validate_axes(const GridAxes& axes) {
    check_monotone(axes.lats, "lat");
    check_monotone(axes.lons, "lon");
    if (axes.n_time == 0) throw Error(ErrorCode::MetaMismatch, "n_time must be positive");
    if (axes.time_step_s <= 0 || kSecondsPerDay % axes.time_step_s != 0) {
        throw Error(ErrorCode::MetaMismatch,
                    "time step " + std::to_string(axes.time_step_s) + " s does not divide 86400 s");
    }
}

void validate(const GridField& field) {
    validate_axes(field.axes);
    if (field.values.size() != field.axes.size()) {
        throw Error(ErrorCode::MetaMismatch, "value count does not match axes");
    }
    for (std::size_t k = 0; k < field.values.size(); ++k) {
        if (std::isnan(field.values[k])) {
            throw Error(ErrorCode::NonFiniteValue, "NaN at flat index " + std::to_string(k));
        }
    }
}

void save_raster(const Raster& raster, const fs::path& dir, const nlohmann::json& extra) {
    validate_axes(raster.axes);
    if (raster.values.size() != raster.axes.size()) {
        throw Error(ErrorCode::MetaMismatch, "value count does not match axes");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["variable"] = raster.variable;
    meta["units"] = raster.units;
    meta["time_start_epoch_s"] = raster.axes.time_start;
    meta["time_step_s"] = raster.axes.time_step_s;
    meta["n_time"] = raster.axes.n_time;
    meta["lats"] = raster.axes.lats;
    meta["lons"] = raster.axes.lons;
    meta["dtype"] = "f32le";
    meta["order"] = "time,lat,lon";

    {
        std::ofstream out(dir / "meta.json", std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "meta.json").string());
        out << meta.dump(2) << '\n';
        if (!out) throw Error(ErrorCode::IoError, "write failed: " + (dir / "meta.json").string());
    }

    std::vector<unsigned char> bytes(raster.values.size() * 4);
    for (std::size_t k = 0; k < raster.values.size(); ++k) {
        const auto bits = std::bit_cast<std::uint32_t>(raster.values[k]);
        bytes[4 * k + 0] = static_cast<unsigned char>(bits & 0xffu);
        bytes[4 * k + 1] = static_cast<unsigned char>((bits >> 8) & 0xffu);
        bytes[4 * k + 2] = static_cast<unsigned char>((bits >> 16) & 0xffu);
        bytes[4 * k + 3] = static_cast<unsigned char>((bits >> 24) & 0xffu);
    }
    std::ofstream out(dir / "data.f32le", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "data.f32le").string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + (dir / "data.f32le").string());
}

Raster load_raster(const fs::path& dir) {
    const fs::path meta_path = dir / "meta.json";
    const fs::path data_path = dir / "data.f32le";
    if (!fs::exists(meta_path)) throw Error(ErrorCode::MissingFile, meta_path.string());
    if (!fs::exists(data_path)) throw Error(ErrorCode::MissingFile, data_path.string());

    nlohmann::json meta;
    try {
        std::ifstream in(meta_path);
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MetaMismatch, meta_path.string() + ": " + e.what());
    }

    Raster r;
    try {
        r.variable = meta.at("variable").get<std::string>();
        r.units = meta.at("units").get<std::string>();
        r.axes.time_start = meta.at("time_start_epoch_s").get<std::int64_t>();
        r.axes.time_step_s = meta.at("time_step_s").get<std::int64_t>();
        r.axes.n_time = meta.at("n_time").get<std::size_t>();
        r.axes.lats = meta.at("lats").get<std::vector<double>>();
        r.axes.lons = meta.at("lons").get<std::vector<double>>();
        if (meta.at("dtype").get<std::string>() != "f32le") {
            throw Error(ErrorCode::MetaMismatch, "unsupported dtype");
        }
        if (meta.at("order").get<std::string>() != "time,lat,lon") {
            throw Error(ErrorCode::MetaMismatch, "unsupported order");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MetaMismatch, meta_path.string() + ": " + e.what());
    }
    validate_axes(r.axes);

    const std::uintmax_t expected = std::uintmax_t(r.axes.size()) * 4;
    const std::uintmax_t actual = fs::file_size(data_path);
    if (actual != expected) {
        throw Error(ErrorCode::MetaMismatch, "payload is " + std::to_string(actual) + " bytes, meta declares " +
                                                 std::to_string(expected));
    }
    std::vector<unsigned char> bytes(expected);
    std::ifstream in(data_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in) throw Error(ErrorCode::IoError, "read failed: " + data_path.string());

    r.values.resize(r.axes.size());
    for (std::size_t k = 0; k < r.values.size(); ++k) {
        const std::uint32_t bits = std::uint32_t(bytes[4 * k]) | (std::uint32_t(bytes[4 * k + 1]) << 8) |
                                   (std::uint32_t(bytes[4 * k + 2]) << 16) |
                                   (std::uint32_t(bytes[4 * k + 3]) << 24);
        r.values[k] = std::bit_cast<float>(bits);
    }
    return r;
}

GridField load_gridpack(const fs::path& dir) {
    Raster r = load_raster(dir);
    GridField f;
    f.variable = parse_variable(r.variable);
    if (r.units != canonical_units(f.variable)) {
        throw Error(ErrorCode::UnitError, "variable " + r.variable + " declares units '" + r.units +
                                              "', expected '" + std::string(canonical_units(f.variable)) + "'");
    }
    f.axes = std::move(r.axes);
    f.values = std::move(r.values);
    validate(f);
    return f;
}

void save_gridpack(const GridField& field, const fs::path& dir, const nlohmann::json& extra) {
    validate(field);
    save_raster(Raster{std::string(variable_name(field.variable)), std::string(field.units()), field.axes,
                       field.values},
                dir, extra);
}

std::vector<double> block_mean(std::span<const double> values, std::size_t n_time, std::size_t n_lat,
                               std::size_t n_lon, CoarsenSpec spec) {
    const std::size_t sf = spec.spatial_factor;
    const std::size_t tf = spec.temporal_factor;
    if (sf == 0 || tf == 0) throw Error(ErrorCode::NonDivisibleShape, "coarsening factors must be positive");
    if (n_lat % sf != 0 || n_lon % sf != 0 || n_time % tf != 0) {
        throw Error(ErrorCode::NonDivisibleShape,
                    "shape " + std::to_string(n_time) + "x" + std::to_string(n_lat) + "x" + std::to_string(n_lon) +
                        " not divisible by (" + std::to_string(tf) + ", " + std::to_string(sf) + ")");
    }
    if (values.size() != n_time * n_lat * n_lon) {
        throw Error(ErrorCode::ShapeMismatch, "value count does not match shape");
    }
    const std::size_t ct = n_time / tf, ci = n_lat / sf, cj = n_lon / sf;
    std::vector<double> out(ct * ci * cj, 0.0);
    for (std::size_t t = 0; t < n_time; ++t) {
        for (std::size_t i = 0; i < n_lat; ++i) {
            const double* row = values.data() + (t * n_lat + i) * n_lon;
            double* orow = out.data() + ((t / tf) * ci + i / sf) * cj;
            for (std::size_t j = 0; j < n_lon; ++j) orow[j / sf] += row[j];
        }
    }
    const double inv = 1.0 / double(sf * sf * tf);
    for (double& v : out) v *= inv;
    return out;
}

GridAxes coarsen_axes(const GridAxes& axes, CoarsenSpec spec) {
    const std::size_t sf = spec.spatial_factor;
    const std::size_t tf = spec.temporal_factor;
    if (sf == 0 || tf == 0 || axes.n_lat() % sf != 0 || axes.n_lon() % sf != 0 || axes.n_time % tf != 0) {
        throw Error(ErrorCode::NonDivisibleShape, "grid not divisible by coarsening factors");
    }
    auto centroids = [sf](const std::vector<double>& axis) {
        std::vector<double> c(axis.size() / sf, 0.0);
        for (std::size_t b = 0; b < c.size(); ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < sf; ++k) s += axis[b * sf + k];
            c[b] = s / double(sf);
        }
        return c;
    };
    GridAxes out;
    out.time_start = axes.time_start;
    out.time_step_s = axes.time_step_s * std::int64_t(tf);
    out.n_time = axes.n_time / tf;
    out.lats = centroids(axes.lats);
    out.lons = centroids(axes.lons);
    return out;
}

GridField coarsen(const GridField& field, CoarsenSpec spec) {
    GridField out;
    out.variable = field.variable;
    out.axes = coarsen_axes(field.axes, spec);
    const std::vector<double> in(field.values.begin(), field.values.end());
    const std::vector<double> m =
        block_mean(in, field.axes.n_time, field.axes.n_lat(), field.axes.n_lon(), spec);
    out.values.assign(m.begin(), m.end());
    return out;
}

}  // namespace flaute
