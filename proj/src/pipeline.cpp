#include "flaute/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flaute/aggregate.hpp"
#include "flaute/biascorrect.hpp"
#include "flaute/detect.hpp"
#include "flaute/error.hpp"
#include "flaute/flowdown.hpp"
#include "flaute/gridstore.hpp"
#include "flaute/powermodel.hpp"
#include "flaute/series.hpp"
#include "flaute/stats.hpp"
#include "flaute/synth.hpp"

namespace flaute {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr VariableId kAllVariables[] = {VariableId::uas, VariableId::vas, VariableId::tas, VariableId::rsds};

std::string cf_raster_name(Technology t) { return "cf_" + std::string(technology_name(t)); }

fs::path required_path(const json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        throw Error(ErrorCode::InvalidArgument, "missing required option --" + flag);
    }
    return fs::path(cfg.at(key).get<std::string>());
}

std::optional<fs::path> optional_path(const json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
    return fs::path(cfg.at(key).get<std::string>());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

// Files below dir, relative and sorted, excluding the provenance record itself.
std::vector<std::string> list_outputs(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel != "provenance.json") out.push_back(std::move(rel));
    }
    std::sort(out.begin(), out.end());
    return out;
}

json provenance(std::string_view command, const json& cfg) {
    json p;
    p["tool"] = "flaute";
    p["version"] = std::string(kVersion);
    p["command"] = std::string(command);
    p["config"] = cfg;
    p["config_hash"] = config_hash(cfg);
    return p;
}

json finish(const fs::path& dir, json prov, const std::vector<std::string>& warnings) {
    prov["warnings"] = warnings;
    prov["outputs"] = list_outputs(dir);
    write_text(dir / "provenance.json", prov.dump(2) + "\n");
    return prov;
}

json hash_extra(const json& cfg) { return json{{"config_hash", config_hash(cfg)}}; }

GridField load_variable(const fs::path& dir, VariableId v) {
    const fs::path sub = dir / std::string(variable_name(v));
    if (!fs::exists(sub / "meta.json")) {
        throw Error(ErrorCode::MissingFile,
                    "input variable " + std::string(variable_name(v)) + " not found at " + sub.string());
    }
    GridField f = load_gridpack(sub);
    if (f.variable != v) {
        throw Error(ErrorCode::MetaMismatch, sub.string() + " holds " + std::string(variable_name(f.variable)));
    }
    return f;
}

std::vector<VariableId> parse_variables(const json& j) {
    std::vector<VariableId> out;
    for (const auto& s : j) out.push_back(parse_variable(s.get<std::string>()));
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "variable list is empty");
    std::set<VariableId> seen(out.begin(), out.end());
    if (seen.size() != out.size()) throw Error(ErrorCode::InvalidArgument, "variable list has duplicates");
    return out;
}

Raster cf_raster(const CfField& f) {
    Raster r{cf_raster_name(f.technology), "1", f.axes, std::vector<float>(f.values.size())};
    std::transform(f.values.begin(), f.values.end(), r.values.begin(), [](double v) { return float(v); });
    return r;
}

Raster mask_raster(const RegionMask& m, const std::string& name, EpochSeconds t0) {
    GridAxes a;
    a.time_start = t0;
    a.time_step_s = kSecondsPerDay;
    a.n_time = 1;
    a.lats = m.lats;
    a.lons = m.lons;
    Raster r{name, "1", a, std::vector<float>(m.fractions.size())};
    std::transform(m.fractions.begin(), m.fractions.end(), r.values.begin(), [](double v) { return float(v); });
    return r;
}

RegionMask mask_from_raster(const Raster& r) {
    RegionMask m{r.axes.lats, r.axes.lons, std::vector<double>(r.values.begin(), r.values.end())};
    return m;
}

struct CfInputs {
    std::vector<CfField> fields;
    RegionMask land;
    std::optional<RegionMask> sea;
};

CfInputs load_cf_dir(const fs::path& dir) {
    CfInputs in;
    for (Technology t : kTechnologies) {
        const fs::path sub = dir / cf_raster_name(t);
        if (!fs::exists(sub / "meta.json")) {
            throw Error(ErrorCode::StageMissing, "CF stage output missing: " + sub.string());
        }
        Raster r = load_raster(sub);
        if (r.variable != cf_raster_name(t)) throw Error(ErrorCode::MetaMismatch, sub.string() + " is " + r.variable);
        in.fields.push_back(CfField{t, r.axes, std::vector<double>(r.values.begin(), r.values.end())});
    }
    if (!fs::exists(dir / "land_fraction" / "meta.json")) {
        throw Error(ErrorCode::StageMissing, "CF stage output missing: " + (dir / "land_fraction").string());
    }
    in.land = mask_from_raster(load_raster(dir / "land_fraction"));
    if (fs::exists(dir / "sea_fraction" / "meta.json")) in.sea = mask_from_raster(load_raster(dir / "sea_fraction"));
    return in;
}

bool offshore_eligible(const RegionMask& land, const RegionMask* sea) {
    for (std::size_t c = 0; c < land.fractions.size(); ++c) {
        const double water = sea ? sea->fractions[c] : 1.0 - land.fractions[c];
        if (land.fractions[c] < 0.5 && water > 0.0) return true;
    }
    return false;
}

CapacityLayout layout_for(const std::vector<CfField>& fields, const CapacityTotals& totals_in, const RegionMask& land,
                          const RegionMask* sea, std::vector<std::string>& warnings) {
    CapacityTotals totals = totals_in;
    if (totals.gw[std::size_t(Technology::offshore_wind)] > 0.0 && !offshore_eligible(land, sea)) {
        warnings.push_back("no cell has land fraction < 0.5; offshore capacity dropped");
        totals.gw[std::size_t(Technology::offshore_wind)] = 0.0;
    }
    PerTechnology means;
    for (const CfField& f : fields) means[std::size_t(f.technology)] = long_term_mean(f);
    return allocate_capacity(means, totals, land, sea);
}

Period period_from(const json& cfg, const GridAxes& axes) {
    const int y0 = cfg.at("period_start_year").is_null() ? year_of(axes.time_start)
                                                          : cfg.at("period_start_year").get<int>();
    const int y1 = cfg.at("period_end_year").is_null() ? year_of(axes.time(axes.n_time - 1))
                                                        : cfg.at("period_end_year").get<int>();
    if (y1 < y0) throw Error(ErrorCode::InvalidArgument, "period end year precedes start year");
    return Period{from_civil({y0, 1, 1}), from_civil({y1 + 1, 1, 1})};
}

std::pair<std::size_t, std::size_t> parse_grid(const json& j) {
    if (j.is_null()) return {0, 0};
    const std::string s = j.get<std::string>();
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("no x");
        std::size_t p1 = 0, p2 = 0;
        const auto h = std::stoul(s.substr(0, x), &p1);
        const auto w = std::stoul(s.substr(x + 1), &p2);
        if (p1 != x || p2 != s.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument("bad");
        return {h, w};
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "grid must look like HxW, got '" + s + "'");
    }
}

DetectionConfig detection_from(const json& cfg) {
    DetectionConfig d;
    d.window_hours = cfg.at("window_hours").get<int>();
    d.threshold = cfg.at("threshold").get<double>();
    return d;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------

GridField ingest_csv(const fs::path& path, VariableId var) {
    const CsvTable table = read_csv(path, {"time", "lat", "lon", "value"});
    if (table.rows.empty()) throw Error(ErrorCode::ParseError, path.string() + ": no data rows");
    std::set<EpochSeconds> times;
    std::set<double> lats, lons;
    struct Row {
        EpochSeconds t;
        double lat, lon, value;
        std::size_t line;
    };
    std::vector<Row> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        Row row{};
        try {
            row.t = parse_iso8601(f[0]);
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
        }
        row.lat = parse_double_field(f[1], line);
        row.lon = parse_double_field(f[2], line);
        row.value = parse_double_field(f[3], line);
        row.line = line;
        times.insert(row.t);
        lats.insert(row.lat);
        lons.insert(row.lon);
        rows.push_back(row);
    }
    GridField field;
    field.variable = var;
    field.axes.lats.assign(lats.begin(), lats.end());
    field.axes.lons.assign(lons.begin(), lons.end());
    const std::vector<EpochSeconds> tv(times.begin(), times.end());
    field.axes.time_start = tv.front();
    field.axes.n_time = tv.size();
    field.axes.time_step_s = tv.size() > 1 ? tv[1] - tv[0] : kSecondsPerDay;
    for (std::size_t i = 1; i < tv.size(); ++i) {
        if (tv[i] - tv[i - 1] != field.axes.time_step_s) {
            throw Error(ErrorCode::ParseError, path.string() + ": irregular time step at " + to_iso8601(tv[i]));
        }
    }
    validate_axes(field.axes);
    field.values.assign(field.axes.size(), 0.0f);
    std::vector<char> seen(field.axes.size(), 0);
    for (const Row& row : rows) {
        const auto ti = std::size_t((row.t - field.axes.time_start) / field.axes.time_step_s);
        const auto li = std::size_t(std::lower_bound(field.axes.lats.begin(), field.axes.lats.end(), row.lat) -
                                    field.axes.lats.begin());
        const auto lj = std::size_t(std::lower_bound(field.axes.lons.begin(), field.axes.lons.end(), row.lon) -
                                    field.axes.lons.begin());
        const std::size_t k = field.axes.index(ti, li, lj);
        if (seen[k]) throw Error(ErrorCode::ParseError, "line " + std::to_string(row.line) + ": duplicate point");
        seen[k] = 1;
        field.values[k] = float(row.value);
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        throw Error(ErrorCode::ParseError, path.string() + ": grid is incomplete (missing time/lat/lon points)");
    }
    return field;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"synth",    "ingest",    "cf",      "detect", "biascorrect",
                                                "train",    "downscale", "riskmap", "report"};
    return names;
}

json default_config(std::string_view command) {
    const SynthConfig sc;
    const TrainConfig tc;
    const NetworkConfig nc;
    const DetectionConfig dc;
    if (command == "synth") {
        return {{"out", nullptr},         {"seed", sc.seed},
                {"start_year", sc.start_year}, {"years", sc.years},
                {"n_lat", sc.n_lat},      {"n_lon", sc.n_lon},
                {"lat0", sc.lat0},        {"lon0", sc.lon0},
                {"spacing_deg", sc.spacing_deg}, {"time_step_s", sc.time_step_s}};
    }
    if (command == "ingest") {
        return {{"input", nullptr},        {"out", nullptr},        {"variable", nullptr},
                {"units", nullptr},        {"format", "auto"},      {"accumulation_s", 0},
                {"spatial_factor", 1},     {"temporal_factor", 1}};
    }
    if (command == "cf") {
        return {{"input", nullptr},  {"out", nullptr}, {"tech_params", nullptr},
                {"region", nullptr}, {"sea", nullptr}, {"capacity_config", "bnetza2024"}};
    }
    if (command == "detect") {
        return {{"input", nullptr},
                {"out", nullptr},
                {"window_hours", dc.window_hours},
                {"threshold", dc.threshold},
                {"histogram_bin_hours", 24.0}};
    }
    if (command == "biascorrect") {
        return {{"model", nullptr}, {"ref", nullptr},      {"apply", nullptr},
                {"out", nullptr},   {"mode", "pooled"},    {"quantiles", 100},
                {"stratify", "none"}};
    }
    if (command == "train") {
        return {{"input", nullptr},
                {"out", nullptr},
                {"variables", {"uas", "vas", "tas", "rsds"}},
                {"seq_len", 8},
                {"grid", nullptr},
                {"stride", 1},
                {"steps", tc.steps},
                {"batch", tc.batch},
                {"lr", tc.learning_rate},
                {"momentum", tc.momentum},
                {"p_drop", tc.p_drop},
                {"hidden", nc.hidden},
                {"blocks", nc.blocks},
                {"fourier", nc.fourier},
                {"embed_dim", nc.embed_dim},
                {"obs_spatial_factor", 4},
                {"obs_temporal_factor", 4},
                {"seed", tc.seed}};
    }
    if (command == "downscale") {
        const DownscaleConfig d;
        return {{"checkpoint", nullptr},
                {"input", nullptr},
                {"out", nullptr},
                {"samples", d.n_samples},
                {"sigma_y", d.sigma_y},
                {"guidance", d.guidance.guidance_scale},
                {"cfg_weight", d.guidance.sampling.cfg_weight},
                {"n_steps", d.guidance.sampling.n_steps},
                {"seed", d.seed},
                {"bc_ref", nullptr},
                {"bc_quantiles", 100}};
    }
    if (command == "riskmap") {
        return {{"cf_dir", nullptr},
                {"manifest", nullptr},
                {"out", nullptr},
                {"period_start_year", nullptr},
                {"period_end_year", nullptr},
                {"mixing", "national_shares"},
                {"capacity_config", "bnetza2024"},
                {"window_hours", dc.window_hours},
                {"threshold", dc.threshold},
                {"reference", nullptr}};
    }
    if (command == "report") {
        return {{"events", nullptr}, {"riskmap", nullptr}, {"out", nullptr}, {"decadal_window", 10},
                {"histogram_bin_hours", 24.0}};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown command '" + std::string(command) + "'");
}

json resolve_config(std::string_view command, const json& file, const json& overrides) {
    json cfg = default_config(command);
    for (const json* layer : {&file, &overrides}) {
        if (layer->is_null()) continue;
        if (!layer->is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
        for (const auto& [key, value] : layer->items()) {
            if (!cfg.contains(key)) {
                throw Error(ErrorCode::InvalidArgument,
                            "unknown option '" + key + "' for command " + std::string(command));
            }
            cfg[key] = value;
        }
    }
    return cfg;
}

json run_command(std::string_view command, const json& config, std::vector<std::string>* warnings) {
    std::vector<std::string> local;
    std::vector<std::string>& w = warnings ? *warnings : local;
    try {
        if (command == "synth") return cmd_synth(config, w);
        if (command == "ingest") return cmd_ingest(config, w);
        if (command == "cf") return cmd_cf(config, w);
        if (command == "detect") return cmd_detect(config, w);
        if (command == "biascorrect") return cmd_biascorrect(config, w);
        if (command == "train") return cmd_train(config, w);
        if (command == "downscale") return cmd_downscale(config, w);
        if (command == "riskmap") return cmd_riskmap(config, w);
        if (command == "report") return cmd_report(config, w);
    } catch (const json::exception& e) {
        // Wrongly typed config values surface here.
        throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
    throw Error(ErrorCode::InvalidArgument, "unknown command '" + std::string(command) + "'");
}

// ---------------------------------------------------------------------------

json cmd_synth(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path out = required_path(cfg, "out");
    SynthConfig sc;
    sc.seed = cfg.at("seed").get<std::uint64_t>();
    sc.start_year = cfg.at("start_year").get<int>();
    sc.years = cfg.at("years").get<int>();
    sc.n_lat = cfg.at("n_lat").get<std::size_t>();
    sc.n_lon = cfg.at("n_lon").get<std::size_t>();
    sc.lat0 = cfg.at("lat0").get<double>();
    sc.lon0 = cfg.at("lon0").get<double>();
    sc.spacing_deg = cfg.at("spacing_deg").get<double>();
    sc.time_step_s = cfg.at("time_step_s").get<std::int64_t>();
    const WeatherSet w = synth_weather(sc);
    ensure_dir(out);
    const json extra = hash_extra(cfg);
    for (const GridField* f : {&w.uas, &w.vas, &w.tas, &w.rsds}) {
        save_gridpack(*f, out / std::string(variable_name(f->variable)), extra);
    }
    auto polygon_json = [](const std::vector<LonLat>& poly) {
        json j = json::array();
        for (const LonLat& p : poly) j.push_back({p.lon, p.lat});
        return j;
    };
    write_text(out / "region.json", polygon_json(synth_land_polygon(sc)).dump() + "\n");
    write_text(out / "sea.json", polygon_json(synth_sea_polygon(sc)).dump() + "\n");
    return finish(out, provenance("synth", cfg), warnings);
}

json cmd_ingest(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path input = required_path(cfg, "input");
    const fs::path out = required_path(cfg, "out");
    std::string format = cfg.at("format").get<std::string>();
    if (format == "auto") format = fs::is_directory(input) ? "gridpack" : "csv";

    GridField field;
    double accumulation = cfg.at("accumulation_s").get<double>();
    if (!(accumulation >= 0.0)) throw Error(ErrorCode::InvalidArgument, "accumulation_s must be >= 0");
    if (format == "gridpack") {
        // Accumulated inputs carry non-canonical units, so read them generically.
        Raster r = load_raster(input);
        field.variable = parse_variable(cfg.at("variable").is_null() ? r.variable
                                                                     : cfg.at("variable").get<std::string>());
        if (accumulation == 0.0 && r.units != canonical_units(field.variable)) {
            throw Error(ErrorCode::UnitError, "units '" + r.units + "' for " +
                                                  std::string(variable_name(field.variable)) + ", expected '" +
                                                  std::string(canonical_units(field.variable)) + "'");
        }
        field.axes = r.axes;
        field.values = std::move(r.values);
    } else if (format == "csv") {
        if (cfg.at("variable").is_null()) throw Error(ErrorCode::InvalidArgument, "CSV ingest needs --variable");
        field = ingest_csv(input, parse_variable(cfg.at("variable").get<std::string>()));
        if (!cfg.at("units").is_null() && accumulation == 0.0) {
            const std::string units = cfg.at("units").get<std::string>();
            if (units != canonical_units(field.variable)) {
                throw Error(ErrorCode::UnitError, "units '" + units + "' for " +
                                                      std::string(variable_name(field.variable)) + ", expected '" +
                                                      std::string(canonical_units(field.variable)) + "'");
            }
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, "format must be auto, csv or gridpack");
    }
    if (accumulation > 0.0) {
        if (field.variable != VariableId::rsds) {
            throw Error(ErrorCode::InvalidArgument, "accumulation_s applies to rsds only");
        }
        for (float& v : field.values) v = float(double(v) / accumulation);
    }
    validate(field);
    const CoarsenSpec spec{cfg.at("spatial_factor").get<std::size_t>(), cfg.at("temporal_factor").get<std::size_t>()};
    if (spec.spatial_factor != 1 || spec.temporal_factor != 1) field = coarsen(field, spec);
    ensure_dir(out);
    const fs::path dest = out / std::string(variable_name(field.variable));
    save_gridpack(field, dest, hash_extra(cfg));
    return finish(out, provenance("ingest", cfg), warnings);
}

json cmd_cf(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path input = required_path(cfg, "input");
    const fs::path out = required_path(cfg, "out");
    WeatherSet w{load_variable(input, VariableId::uas), load_variable(input, VariableId::vas),
                 load_variable(input, VariableId::tas), load_variable(input, VariableId::rsds)};
    for (const GridField* f : {&w.vas, &w.tas, &w.rsds}) {
        if (!(f->axes == w.uas.axes)) {
            throw Error(ErrorCode::AxisMismatch, std::string(variable_name(f->variable)) + " axes differ from uas");
        }
    }
    const auto tech_path = optional_path(cfg, "tech_params");
    const TechParams params = tech_path ? load_tech_params(*tech_path) : TechParams{};

    auto region_path = optional_path(cfg, "region");
    if (!region_path && fs::exists(input / "region.json")) region_path = input / "region.json";
    auto sea_path = optional_path(cfg, "sea");
    if (!sea_path && fs::exists(input / "sea.json")) sea_path = input / "sea.json";
    const auto& lats = w.uas.axes.lats;
    const auto& lons = w.uas.axes.lons;
    const RegionMask land = region_path ? mask_from_polygon(load_polygon(*region_path), lats, lons)
                                        : full_mask(lats, lons);
    std::optional<RegionMask> sea;
    if (sea_path) sea = mask_from_polygon(load_polygon(*sea_path), lats, lons);

    const std::array<CfField, 3> cf = capacity_factors(w, params);
    const std::vector<CfField> fields(cf.begin(), cf.end());
    const CapacityLayout layout =
        layout_for(fields, capacity_totals(cfg.at("capacity_config").get<std::string>()), land,
                   sea ? &*sea : nullptr, warnings);
    const CfSeries national = combined_cf(fields, layout);

    ensure_dir(out);
    json extra = hash_extra(cfg);
    extra["tech_params"] = to_json(params);
    for (const CfField& f : fields) save_raster(cf_raster(f), out / cf_raster_name(f.technology), extra);
    save_raster(mask_raster(land, "land_fraction", w.uas.axes.time_start), out / "land_fraction", hash_extra(cfg));
    if (sea) save_raster(mask_raster(*sea, "sea_fraction", w.uas.axes.time_start), out / "sea_fraction", hash_extra(cfg));
    write_series_csv(national, out / "national_cf.csv");
    write_layout_csv(layout, out / "layout.csv");
    json prov = provenance("cf", cfg);
    prov["tech_params"] = to_json(params);
    prov["capacity_gw"] = {{"onshore_wind", layout.total_gw[0]},
                           {"offshore_wind", layout.total_gw[1]},
                           {"solar_pv", layout.total_gw[2]}};
    return finish(out, prov, warnings);
}

json cmd_detect(const json& cfg, std::vector<std::string>& warnings) {
    fs::path input = required_path(cfg, "input");
    if (fs::is_directory(input)) input /= "national_cf.csv";
    const fs::path out = required_path(cfg, "out");
    const CfSeries series = read_series_csv(input);
    const DetectionConfig dc = detection_from(cfg);
    const EventList events = detect_events(series, dc, SeriesKind::raw);

    ensure_dir(out);
    write_events_csv(events, out / "events.csv");

    const int y0 = year_of(series.time_start);
    const int y1 = year_of(series.time(series.size() - 1));
    std::ostringstream yearly;
    yearly << "year,count\n";
    for (const auto& [year, count] : events_per_year(events, y0, y1)) yearly << year << ',' << count << '\n';
    write_text(out / "yearly_counts.csv", yearly.str());

    const DurationHistogram hist = duration_histogram(events, cfg.at("histogram_bin_hours").get<double>());
    std::ostringstream h;
    h << "bin_start_hours,bin_end_hours,count\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        h << format_double(double(b) * hist.bin_hours) << ',' << format_double(double(b + 1) * hist.bin_hours) << ','
          << hist.counts[b] << '\n';
    }
    write_text(out / "duration_histogram.csv", h.str());

    json prov = provenance("detect", cfg);
    const YearRange years = full_years(series);
    prov["full_years"] = years.count() > 0 ? json{{"first", years.first}, {"last", years.last}} : json(nullptr);
    if (years.count() > 0) {
        const auto clim = monthly_climatology(events, years);
        std::ostringstream m;
        m << "month,events_per_year\n";
        for (int i = 0; i < 12; ++i) m << (i + 1) << ',' << format_double(clim[std::size_t(i)]) << '\n';
        write_text(out / "monthly_climatology.csv", m.str());
    } else {
        warnings.push_back("series covers no full calendar year; monthly climatology skipped");
    }
    prov["n_events"] = events.size();
    return finish(out, prov, warnings);
}

json cmd_biascorrect(const json& cfg, std::vector<std::string>& warnings) {
    const GridField model = load_gridpack(required_path(cfg, "model"));
    const GridField ref = load_gridpack(required_path(cfg, "ref"));
    const auto apply_path = optional_path(cfg, "apply");
    const GridField target = apply_path ? load_gridpack(*apply_path) : model;
    const fs::path out = required_path(cfg, "out");

    QmConfig qc;
    const std::string mode = cfg.at("mode").get<std::string>();
    if (mode == "pooled") qc.mode = QmMode::pooled;
    else if (mode == "per_cell") qc.mode = QmMode::per_cell;
    else throw Error(ErrorCode::InvalidArgument, "mode must be pooled or per_cell");
    const std::string strat = cfg.at("stratify").get<std::string>();
    if (strat == "none") qc.stratify = QmStratify::none;
    else if (strat == "month") qc.stratify = QmStratify::month;
    else throw Error(ErrorCode::InvalidArgument, "stratify must be none or month");
    qc.n_quantiles = cfg.at("quantiles").get<std::size_t>();
    if (target.variable != model.variable) {
        throw Error(ErrorCode::UnitError, "apply field variable differs from the fitted model variable");
    }

    const FieldCorrection corr = fit_field_correction(model, ref, qc);
    const GridField corrected = apply_field_correction(corr, target);
    ensure_dir(out);
    save_gridpack(corrected, out / std::string(variable_name(corrected.variable)), hash_extra(cfg));
    write_text(out / "maps.json", to_json(corr).dump(2) + "\n");
    return finish(out, provenance("biascorrect", cfg), warnings);
}

json cmd_train(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path input = required_path(cfg, "input");
    const fs::path out = required_path(cfg, "out");
    const std::vector<VariableId> vars = parse_variables(cfg.at("variables"));
    std::vector<GridField> fine;
    for (VariableId v : vars) fine.push_back(load_variable(input, v));
    const auto [crop_h, crop_w] = parse_grid(cfg.at("grid"));
    const std::size_t steps = cfg.at("seq_len").get<std::size_t>();
    const TrainingSet data =
        build_training_set(fine, steps, cfg.at("stride").get<std::size_t>(), crop_h, crop_w);
    if (data.sequences.empty()) throw Error(ErrorCode::InsufficientSpan, "no training windows");

    NetworkConfig net;
    net.hidden = cfg.at("hidden").get<std::size_t>();
    net.blocks = cfg.at("blocks").get<std::size_t>();
    net.fourier = cfg.at("fourier").get<std::size_t>();
    net.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    TrainConfig tc;
    tc.steps = cfg.at("steps").get<std::size_t>();
    tc.batch = cfg.at("batch").get<std::size_t>();
    tc.learning_rate = cfg.at("lr").get<double>();
    tc.momentum = cfg.at("momentum").get<double>();
    tc.p_drop = cfg.at("p_drop").get<double>();
    tc.seed = cfg.at("seed").get<std::uint64_t>();

    const SequenceShape shape = data.sequences.front().shape;
    FlowModel model(shape, net, tc.seed);
    model.grid.variables = vars;
    model.grid.lats.assign(fine[0].axes.lats.begin(), fine[0].axes.lats.begin() + std::ptrdiff_t(shape.height));
    model.grid.lons.assign(fine[0].axes.lons.begin(), fine[0].axes.lons.begin() + std::ptrdiff_t(shape.width));
    model.grid.time_step_s = fine[0].axes.time_step_s;
    model.grid.obs_spec = {cfg.at("obs_spatial_factor").get<std::size_t>(),
                           cfg.at("obs_temporal_factor").get<std::size_t>()};
    observed_shape(shape, model.grid.obs_spec);  // divisibility check before training

    const std::vector<double> losses = train(model, data, tc);
    ensure_dir(out);
    save_checkpoint(model, out);
    std::ostringstream l;
    l << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) l << i << ',' << format_double(losses[i]) << '\n';
    write_text(out / "loss.csv", l.str());
    json prov = provenance("train", cfg);
    prov["n_sequences"] = data.sequences.size();
    prov["n_params"] = model.n_params();
    return finish(out, prov, warnings);
}

json cmd_downscale(const json& cfg, std::vector<std::string>& warnings) {
    const FlowModel model = load_checkpoint(required_path(cfg, "checkpoint"));
    const fs::path input = required_path(cfg, "input");
    const fs::path out = required_path(cfg, "out");
    std::vector<GridField> coarse;
    for (VariableId v : model.grid.variables) coarse.push_back(load_variable(input, v));

    DownscaleConfig dc;
    dc.n_samples = cfg.at("samples").get<std::size_t>();
    dc.sigma_y = cfg.at("sigma_y").get<double>();
    dc.guidance.guidance_scale = cfg.at("guidance").get<double>();
    dc.guidance.sampling.cfg_weight = cfg.at("cfg_weight").get<double>();
    dc.guidance.sampling.n_steps = cfg.at("n_steps").get<std::size_t>();
    dc.seed = cfg.at("seed").get<std::uint64_t>();
    DownscaleResult result = downscale_pipeline(coarse, model, dc);

    const auto bc_ref = optional_path(cfg, "bc_ref");
    if (bc_ref) {
        QmConfig qc;
        qc.n_quantiles = cfg.at("bc_quantiles").get<std::size_t>();
        for (std::size_t v = 0; v < model.grid.variables.size(); ++v) {
            const GridField ref = load_variable(*bc_ref, model.grid.variables[v]);
            // Pool all samples into one model sample.
            GridField pooled = result.samples[0][v];
            for (std::size_t s = 1; s < result.samples.size(); ++s) {
                const auto& vals = result.samples[s][v].values;
                pooled.values.insert(pooled.values.end(), vals.begin(), vals.end());
            }
            pooled.axes.n_time *= result.samples.size();
            const FieldCorrection corr = fit_field_correction(pooled, ref, qc);
            for (auto& sample : result.samples) sample[v] = apply_field_correction(corr, sample[v]);
        }
    }
    // The mean is recomputed from the float values that are written.
    for (std::size_t v = 0; v < result.mean.size(); ++v) {
        GridField& m = result.mean[v];
        for (std::size_t k = 0; k < m.values.size(); ++k) {
            double acc = 0.0;
            for (const auto& sample : result.samples) acc += double(sample[v].values[k]);
            m.values[k] = float(acc / double(result.samples.size()));
        }
    }

    ensure_dir(out);
    const json extra = hash_extra(cfg);
    for (std::size_t s = 0; s < result.samples.size(); ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%03zu", s);
        for (const GridField& f : result.samples[s]) save_gridpack(f, out / name / std::string(variable_name(f.variable)), extra);
    }
    for (const GridField& f : result.mean) save_gridpack(f, out / "mean" / std::string(variable_name(f.variable)), extra);
    json prov = provenance("downscale", cfg);
    prov["bias_corrected"] = bool(bc_ref);
    return finish(out, prov, warnings);
}

json cmd_riskmap(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path out = required_path(cfg, "out");
    const auto cf_dir = optional_path(cfg, "cf_dir");
    const auto manifest_path = optional_path(cfg, "manifest");
    if (bool(cf_dir) == bool(manifest_path)) {
        throw Error(ErrorCode::InvalidArgument, "give exactly one of --cf-dir or --manifest");
    }
    const std::string mixing = cfg.at("mixing").get<std::string>();
    RiskMapConfig rc;
    rc.detection = detection_from(cfg);
    if (mixing == "national_shares") rc.mixing = CellMixing::national_shares;
    else if (mixing == "resource_proportional") rc.mixing = CellMixing::resource_proportional;
    else throw Error(ErrorCode::InvalidArgument, "mixing must be national_shares or resource_proportional");
    const CapacityTotals totals = capacity_totals(cfg.at("capacity_config").get<std::string>());
    double gw_sum = totals.gw[0] + totals.gw[1] + totals.gw[2];
    for (std::size_t k = 0; k < 3; ++k) rc.national_shares[k] = totals.gw[k] / gw_sum;

    std::optional<RiskMap> reference;
    if (const auto ref = optional_path(cfg, "reference")) reference = load_risk_gridpack(*ref);

    struct Member {
        std::string id, scenario;
        fs::path path;
    };
    std::vector<Member> members;
    if (cf_dir) {
        members.push_back({"", "", *cf_dir});
    } else {
        const json manifest = read_json(*manifest_path);
        if (!manifest.contains("members") || !manifest.at("members").is_array()) {
            throw Error(ErrorCode::ParseError, manifest_path->string() + ": expected {\"members\": [...]}");
        }
        std::set<std::string> ids;
        for (const json& m : manifest.at("members")) {
            Member mem{m.at("id").get<std::string>(), m.value("scenario", std::string("historical")),
                       fs::path(m.at("path").get<std::string>())};
            if (mem.path.is_relative()) mem.path = manifest_path->parent_path() / mem.path;
            if (mem.id.empty() || mem.id.find('/') != std::string::npos || !ids.insert(mem.id).second) {
                throw Error(ErrorCode::ParseError, "member ids must be unique, non-empty names");
            }
            members.push_back(std::move(mem));
        }
        if (members.size() < 2) throw Error(ErrorCode::TooFewMembers, "manifest lists fewer than 2 members");
    }

    ensure_dir(out);
    std::map<std::string, std::vector<RiskMap>> by_scenario;
    const json extra = hash_extra(cfg);
    for (const Member& m : members) {
        const CfInputs in = load_cf_dir(m.path);
        std::optional<CapacityLayout> layout;
        if (rc.mixing == CellMixing::resource_proportional) {
            layout = layout_for(in.fields, totals, in.land, in.sea ? &*in.sea : nullptr, warnings);
        }
        RiskMapConfig mc = rc;
        mc.land = &in.land;
        mc.layout = layout ? &*layout : nullptr;
        const RiskMap map = pixel_risk_map(in.fields, mc, period_from(cfg, in.fields[0].axes));
        const fs::path dest = m.id.empty() ? out : out / "members" / m.id;
        ensure_dir(dest);
        save_risk_gridpack(map, dest / "risk", extra);
        write_risk_csv(map, dest / "risk.csv");
        if (reference) {
            const SignedMap d = difference_map(map, *reference);
            std::ostringstream s;
            s << "lat,lon,difference_per_decade\n";
            for (std::size_t i = 0; i < d.lats.size(); ++i) {
                for (std::size_t j = 0; j < d.lons.size(); ++j) {
                    s << format_double(d.lats[i]) << ',' << format_double(d.lons[j]) << ','
                      << format_double(d.values[i * d.lons.size() + j]) << '\n';
                }
            }
            write_text(dest / "difference.csv", s.str());
        }
        if (!m.id.empty()) by_scenario[m.scenario].push_back(map);
    }
    for (const auto& [scenario, maps] : by_scenario) {
        if (maps.size() < 2) {
            warnings.push_back("scenario " + scenario + " has one member; ensemble statistics skipped");
            continue;
        }
        const EnsembleSummary e = ensemble_stats(maps);
        std::ostringstream s;
        s << "lat,lon,mean,std,max,min\n";
        const RiskMap& m0 = maps.front();
        for (std::size_t i = 0; i < m0.lats.size(); ++i) {
            for (std::size_t j = 0; j < m0.lons.size(); ++j) {
                const std::size_t c = i * m0.lons.size() + j;
                s << format_double(m0.lats[i]) << ',' << format_double(m0.lons[j]) << ',' << format_double(e.mean[c])
                  << ',' << format_double(e.std[c]) << ',' << format_double(e.max[c]) << ','
                  << format_double(e.min[c]) << '\n';
            }
        }
        write_text(out / ("ensemble_" + scenario + ".csv"), s.str());
    }
    return finish(out, provenance("riskmap", cfg), warnings);
}

json cmd_report(const json& cfg, std::vector<std::string>& warnings) {
    const fs::path events_dir = required_path(cfg, "events");
    const fs::path out = required_path(cfg, "out");
    for (const char* name : {"events.csv", "yearly_counts.csv"}) {
        if (!fs::exists(events_dir / name)) {
            throw Error(ErrorCode::StageMissing, "detect stage output missing: " + (events_dir / name).string());
        }
    }
    const EventList events = read_events_csv(events_dir / "events.csv");
    const CsvTable yearly_table = read_csv(events_dir / "yearly_counts.csv", {"year", "count"});
    std::vector<double> yearly;
    json yearly_json = json::array();
    for (std::size_t r = 0; r < yearly_table.rows.size(); ++r) {
        const auto line = yearly_table.line_numbers[r];
        const long long year = parse_int_field(yearly_table.rows[r][0], line);
        const long long count = parse_int_field(yearly_table.rows[r][1], line);
        yearly.push_back(double(count));
        yearly_json.push_back({{"year", year}, {"count", count}});
    }

    json report;
    report["schema_version"] = "1.0";
    report["provenance"] = provenance("report", cfg);
    json upstream = json::object();
    if (fs::exists(events_dir / "provenance.json")) {
        const json p = read_json(events_dir / "provenance.json");
        upstream["detect"] = {{"config_hash", p.value("config_hash", "")}, {"config", p.value("config", json())}};
    }

    json ev;
    ev["count"] = events.size();
    double total_h = 0.0, max_h = 0.0, min_cf = 1.0;
    for (const Event& e : events) {
        total_h += e.duration_hours;
        max_h = std::max(max_h, e.duration_hours);
        min_cf = std::min(min_cf, e.min_cf);
    }
    ev["total_hours"] = total_h;
    ev["mean_duration_hours"] = events.empty() ? json(nullptr) : json(total_h / double(events.size()));
    ev["max_duration_hours"] = events.empty() ? json(nullptr) : json(max_h);
    ev["min_cf"] = events.empty() ? json(nullptr) : json(min_cf);
    report["events"] = ev;
    report["yearly_counts"] = yearly_json;

    if (fs::exists(events_dir / "monthly_climatology.csv")) {
        const CsvTable t = read_csv(events_dir / "monthly_climatology.csv", {"month", "events_per_year"});
        json clim = json::array();
        for (std::size_t r = 0; r < t.rows.size(); ++r) clim.push_back(parse_double_field(t.rows[r][1], t.line_numbers[r]));
        report["monthly_climatology"] = clim;
    } else {
        report["monthly_climatology"] = nullptr;
        warnings.push_back("no monthly climatology in the detect output");
    }

    const DurationHistogram hist = duration_histogram(events, cfg.at("histogram_bin_hours").get<double>());
    report["duration_histogram"] = {{"bin_hours", hist.bin_hours}, {"counts", hist.counts}};

    if (yearly.size() >= 3) {
        const TrendResult tr = trend_test(yearly);
        report["trend"] = {{"slope_per_year", finite_or_null(tr.slope)},
                           {"t_statistic", finite_or_null(tr.t_statistic)},
                           {"p_value", finite_or_null(tr.p_value)},
                           {"significant", tr.significant}};
    } else {
        report["trend"] = nullptr;
        warnings.push_back("fewer than 3 years; trend test skipped");
    }
    const std::size_t window = cfg.at("decadal_window").get<std::size_t>();
    if (window >= 2 && yearly.size() >= window) {
        const RollingStats rs = rolling_decadal(yearly, window);
        report["decadal"] = {{"window_years", window}, {"mean", rs.mean}, {"std", rs.std}};
    } else {
        report["decadal"] = nullptr;
        warnings.push_back("record shorter than the decadal window; rolling statistics skipped");
    }

    json risk = json::array();
    if (const auto rdir = optional_path(cfg, "riskmap")) {
        if (!fs::exists(*rdir / "provenance.json")) {
            throw Error(ErrorCode::StageMissing, "riskmap stage output missing: " + rdir->string());
        }
        const json p = read_json(*rdir / "provenance.json");
        upstream["riskmap"] = {{"config_hash", p.value("config_hash", "")}};
        for (const json& o : p.at("outputs")) {
            const std::string rel = o.get<std::string>();
            const std::string suffix = "risk/meta.json";
            if (rel.size() < suffix.size() || rel.compare(rel.size() - suffix.size(), suffix.size(), suffix) != 0) {
                continue;
            }
            const fs::path dir = (*rdir / rel).parent_path();
            const RiskMap m = load_risk_gridpack(dir);
            long long total = 0;
            int max_count = 0;
            for (int c : m.counts) {
                total += c;
                max_count = std::max(max_count, c);
            }
            risk.push_back({{"path", dir.generic_string()},
                            {"n_cells", m.counts.size()},
                            {"total_count", total},
                            {"max_count", max_count},
                            {"period_years", m.period.years()}});
        }
    }
    report["risk_maps"] = risk;
    report["upstream"] = upstream;
    report["provenance"]["warnings"] = warnings;
    report["summary_sha256"] = sha256_hex(report.dump());

    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_text(out, report.dump(2) + "\n");
    return report["provenance"];
}

}  // namespace flaute
