#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "flaute/aggregate.hpp"
#include "flaute/biascorrect.hpp"
#include "flaute/detect.hpp"
#include "flaute/error.hpp"
#include "flaute/gridstore.hpp"
#include "flaute/pipeline.hpp"
#include "flaute/powermodel.hpp"
#include "flaute/stats.hpp"

namespace py = pybind11;
using namespace flaute;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

DoubleArray to_array(const std::vector<double>& v) {
    DoubleArray out(py::ssize_t(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

GridAxes axes_from(const FloatArray& values, EpochSeconds time_start, std::int64_t step, const DoubleArray& lats,
                   const DoubleArray& lons) {
    if (values.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "values must be (time, lat, lon)");
    GridAxes a;
    a.time_start = time_start;
    a.time_step_s = step;
    a.n_time = std::size_t(values.shape(0));
    a.lats = to_vector(lats);
    a.lons = to_vector(lons);
    if (a.lats.size() != std::size_t(values.shape(1)) || a.lons.size() != std::size_t(values.shape(2))) {
        throw Error(ErrorCode::ShapeMismatch, "coordinate lengths do not match values");
    }
    validate_axes(a);
    return a;
}

GridField field_from(VariableId v, const FloatArray& values, EpochSeconds t0, std::int64_t step,
                     const DoubleArray& lats, const DoubleArray& lons) {
    GridField f{v, axes_from(values, t0, step, lats, lons),
                std::vector<float>(values.data(), values.data() + values.size())};
    validate(f);
    return f;
}

py::array_t<float> field_values(const GridAxes& a, const std::vector<float>& v) {
    py::array_t<float> out({py::ssize_t(a.n_time), py::ssize_t(a.n_lat()), py::ssize_t(a.n_lon())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict raster_dict(const Raster& r) {
    py::dict d;
    d["variable"] = r.variable;
    d["units"] = r.units;
    d["time_start"] = r.axes.time_start;
    d["time_step_s"] = r.axes.time_step_s;
    d["lats"] = to_array(r.axes.lats);
    d["lons"] = to_array(r.axes.lons);
    d["values"] = field_values(r.axes, r.values);
    return d;
}

CfSeries series_from(const DoubleArray& values, EpochSeconds t0, std::int64_t step) {
    return CfSeries{t0, step, to_vector(values)};
}

}  // namespace

PYBIND11_MODULE(_flaute, m) {
    m.doc() = "Bindings for the flaute C++ core";
    m.attr("__version__") = std::string(kVersion);

    static py::exception<Error> error_type(m, "FlauteError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(error_type.ptr())(e.what());
            exc.attr("code") = int(e.code());
            exc.attr("category") = std::string(error_name(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    // gridstore
    m.def("load_gridpack", [](const std::filesystem::path& path) { return raster_dict(load_raster(path)); },
          py::arg("path"));
    m.def(
        "save_gridpack",
        [](const std::filesystem::path& path, const std::string& variable, const FloatArray& values, EpochSeconds time_start,
           std::int64_t time_step_s, const DoubleArray& lats, const DoubleArray& lons) {
            save_gridpack(field_from(parse_variable(variable), values, time_start, time_step_s, lats, lons), path);
        },
        py::arg("path"), py::arg("variable"), py::arg("values"), py::arg("time_start"), py::arg("time_step_s"),
        py::arg("lats"), py::arg("lons"));
    m.def(
        "coarsen",
        [](const FloatArray& values, std::size_t spatial_factor, std::size_t temporal_factor) {
            if (values.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "values must be (time, lat, lon)");
            const std::vector<double> v(values.data(), values.data() + values.size());
            const auto nt = std::size_t(values.shape(0)), ny = std::size_t(values.shape(1)),
                       nx = std::size_t(values.shape(2));
            const std::vector<double> out = block_mean(v, nt, ny, nx, {spatial_factor, temporal_factor});
            DoubleArray arr({py::ssize_t(nt / temporal_factor), py::ssize_t(ny / spatial_factor),
                             py::ssize_t(nx / spatial_factor)});
            std::copy(out.begin(), out.end(), arr.mutable_data());
            return arr;
        },
        py::arg("values"), py::arg("spatial_factor"), py::arg("temporal_factor"));

    // powermodel
    m.def("log_law_factor", &log_law_factor, py::arg("hub_height_m"), py::arg("roughness_m"));
    m.def(
        "wind_power_curve",
        [](const DoubleArray& speed, const std::string& technology) {
            const Technology t = parse_technology(technology);
            const TurbineParams p = t == Technology::offshore_wind ? TurbineParams::offshore() : TurbineParams::onshore();
            validate(p);
            std::vector<double> out(std::size_t(speed.size()));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = power_curve(speed.data()[i], p);
            return to_array(out);
        },
        py::arg("speed_hub"), py::arg("technology") = "onshore_wind");
    m.def(
        "pv_capacity_factor",
        [](const DoubleArray& rsds, const DoubleArray& tas) {
            if (rsds.size() != tas.size()) throw Error(ErrorCode::AxisMismatch, "rsds and tas differ in size");
            const PvParams p;
            std::vector<double> out(std::size_t(rsds.size()));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pv_capacity_factor(rsds.data()[i], tas.data()[i], p);
            return to_array(out);
        },
        py::arg("rsds"), py::arg("tas"));

    // aggregate
    m.def(
        "mask_from_polygon",
        [](const std::vector<std::array<double, 2>>& polygon, const DoubleArray& lats, const DoubleArray& lons) {
            std::vector<LonLat> poly;
            for (const auto& p : polygon) poly.push_back({p[0], p[1]});
            const RegionMask mask = mask_from_polygon(poly, to_vector(lats), to_vector(lons));
            DoubleArray out({py::ssize_t(mask.lats.size()), py::ssize_t(mask.lons.size())});
            std::copy(mask.fractions.begin(), mask.fractions.end(), out.mutable_data());
            return out;
        },
        py::arg("polygon"), py::arg("lats"), py::arg("lons"));
    m.def("technology_shares_2024", []() {
        py::dict d;
        const auto shares = technology_shares_2024();
        for (Technology t : kTechnologies) {
            const auto& s = shares[std::size_t(t)];
            d[py::str(std::string(technology_name(t)))] = py::make_tuple(s.share, s.gw);
        }
        return d;
    });

    // detect
    m.def(
        "rolling_mean",
        [](const DoubleArray& values, std::int64_t time_step_s, int window_hours) {
            return to_array(rolling_mean(series_from(values, 0, time_step_s), window_hours).values);
        },
        py::arg("values"), py::arg("time_step_s"), py::arg("window_hours") = 48);
    m.def(
        "detect_events",
        [](const DoubleArray& values, EpochSeconds time_start, std::int64_t time_step_s, int window_hours,
           double threshold, bool smoothed) {
            const EventList events = detect_events(series_from(values, time_start, time_step_s),
                                                   DetectionConfig{window_hours, threshold},
                                                   smoothed ? SeriesKind::smoothed : SeriesKind::raw);
            py::list out;
            for (const Event& e : events) {
                py::dict d;
                d["start"] = e.start;
                d["duration_hours"] = e.duration_hours;
                d["min_cf"] = e.min_cf;
                d["mean_cf"] = e.mean_cf;
                out.append(d);
            }
            return out;
        },
        py::arg("values"), py::arg("time_start"), py::arg("time_step_s"), py::arg("window_hours") = 48,
        py::arg("threshold") = 0.06, py::arg("smoothed") = false);

    // biascorrect
    py::class_<QuantileMap>(m, "QuantileMap")
        .def_readonly("levels", &QuantileMap::levels)
        .def_readonly("source_quantiles", &QuantileMap::source_quantiles)
        .def_readonly("target_quantiles", &QuantileMap::target_quantiles)
        .def("__call__", [](const QuantileMap& q, const DoubleArray& x) {
            return to_array(apply_quantile_map(q, to_vector(x)));
        });
    m.def(
        "fit_quantile_map",
        [](const DoubleArray& model_ref, const DoubleArray& obs_ref, std::size_t n_quantiles) {
            return fit_quantile_map(to_vector(model_ref), to_vector(obs_ref), n_quantiles);
        },
        py::arg("model_ref"), py::arg("obs_ref"), py::arg("n_quantiles") = 100);

    // stats
    m.def(
        "trend_test",
        [](const DoubleArray& yearly, double alpha) {
            const TrendResult r = trend_test(to_vector(yearly), alpha);
            py::dict d;
            d["slope"] = r.slope;
            d["t_statistic"] = r.t_statistic;
            d["p_value"] = r.p_value;
            d["significant"] = r.significant;
            return d;
        },
        py::arg("yearly"), py::arg("alpha") = 0.05);
    m.def(
        "rolling_decadal",
        [](const DoubleArray& yearly, std::size_t window) {
            const RollingStats r = rolling_decadal(to_vector(yearly), window);
            return py::make_tuple(to_array(r.mean), to_array(r.std));
        },
        py::arg("yearly"), py::arg("window_years") = 10);
    m.def(
        "ensemble_stats",
        [](const DoubleArray& members) {
            if (members.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "members must be (member, value)");
            std::vector<std::vector<double>> rows;
            const auto n = std::size_t(members.shape(1));
            for (py::ssize_t i = 0; i < members.shape(0); ++i) {
                rows.emplace_back(members.data() + i * py::ssize_t(n), members.data() + (i + 1) * py::ssize_t(n));
            }
            const EnsembleSummary s = ensemble_stats(rows);
            py::dict d;
            d["mean"] = to_array(s.mean);
            d["std"] = to_array(s.std);
            d["max"] = to_array(s.max);
            d["min"] = to_array(s.min);
            return d;
        },
        py::arg("members"));

    // pipeline; configs cross the boundary as JSON text
    m.def("command_names", &command_names);
    m.def(
        "default_config", [](const std::string& command) { return default_config(command).dump(); },
        py::arg("command"));
    m.def(
        "run_command",
        [](const std::string& command, const std::string& config_json) {
            const nlohmann::json cfg = resolve_config(command, nlohmann::json::parse(config_json), nullptr);
            std::vector<std::string> warnings;
            nlohmann::json prov;
            {
                py::gil_scoped_release release;
                prov = run_command(command, cfg, &warnings);
            }
            return prov.dump();
        },
        py::arg("command"), py::arg("config_json"));
    m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); }, py::arg("data"));
}
