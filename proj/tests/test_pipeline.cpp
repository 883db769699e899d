#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flaute/detect.hpp"
#include "flaute/error.hpp"
#include "flaute/gridstore.hpp"
#include "flaute/pipeline.hpp"
#include "flaute/series.hpp"
#include "support/tmpdir.hpp"

using namespace flaute;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json run(const std::string& cmd, const json& overrides, std::vector<std::string>* warnings = nullptr) {
    return run_command(cmd, resolve_config(cmd, nullptr, overrides), warnings);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

// Two years of 4x4 synthetic weather shared by the tests below.
const testing::TempDir& weather() {
    static const testing::TempDir dir("pipe");
    static const bool made = [] {
        run("synth", {{"out", (dir / "w").string()}, {"years", 2}, {"seed", 11}});
        return true;
    }();
    (void)made;
    return dir;
}

fs::path weather_dir() { return weather() / "w"; }

void write_series(const fs::path& p, std::vector<double> v) {
    write_series_csv(CfSeries{946684800, 21600, std::move(v)}, p);
}

#ifdef FLAUTE_CLI_PATH
struct CliResult {
    int status;
    std::string err;
};

CliResult cli(const std::string& args, const fs::path& scratch) {
    const fs::path err = scratch / "stderr.txt";
    const std::string cmd = std::string(FLAUTE_CLI_PATH) + " " + args + " 2> " + err.string() + " > /dev/null";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}
#endif

}  // namespace

TEST_CASE("config resolution") {
    const json d = default_config("detect");
    CHECK(d.at("window_hours") == 48);
    CHECK(d.at("threshold") == 0.06);
    const json r = resolve_config("detect", json{{"threshold", 0.1}, {"window_hours", 24}}, json{{"threshold", 0.2}});
    CHECK(r.at("threshold") == 0.2);
    CHECK(r.at("window_hours") == 24);
    CHECK(r.at("histogram_bin_hours") == 24.0);
    CHECK(code_of([] { resolve_config("detect", nullptr, json{{"windw", 3}}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { default_config("nope"); }) == ErrorCode::InvalidArgument);
    CHECK(config_hash(r) == config_hash(json::parse(r.dump())));
    CHECK(config_hash(r) != config_hash(d));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(command_names().size() == 9);
}

TEST_CASE("capacity factors from synthetic inputs") {
    testing::TempDir tmp("cf");
    const json prov = run("cf", {{"input", weather_dir().string()}, {"out", (tmp / "cf").string()}});
    CHECK(prov.at("command") == "cf");
    CHECK(prov.at("config_hash").get<std::string>().size() == 64);
    for (const char* name : {"cf_onshore_wind", "cf_offshore_wind", "cf_solar_pv"}) {
        const Raster r = load_raster(tmp / "cf" / name);
        for (float v : r.values) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        const json meta = json::parse(slurp(tmp / "cf" / name / "meta.json"));
        CHECK(meta.at("config_hash") == prov.at("config_hash"));
    }
    const CfSeries national = read_series_csv(tmp / "cf" / "national_cf.csv");
    CHECK(national.size() == 4 * 731);
    const json disk = json::parse(slurp(tmp / "cf" / "provenance.json"));
    CHECK(disk.at("config_hash") == prov.at("config_hash"));
    CHECK(disk.at("outputs").size() > 5);
}

TEST_CASE("missing weather variable is named") {
    testing::TempDir tmp("cf");
    fs::copy(weather_dir(), tmp / "w", fs::copy_options::recursive);
    fs::remove_all(tmp / "w" / "rsds");
    const auto f = [&] { run("cf", {{"input", (tmp / "w").string()}, {"out", (tmp / "cf").string()}}); };
    CHECK(code_of(f) == ErrorCode::MissingFile);
    CHECK(message_of(f).find("rsds") != std::string::npos);
}

TEST_CASE("cf and detect are byte-identical across runs") {
    testing::TempDir tmp("det");
    for (const char* tag : {"a", "b"}) {
        const fs::path r = tmp / tag;
        run("cf", {{"input", weather_dir().string()}, {"out", (r / "cf").string()}});
        run("detect", {{"input", (r / "cf").string()}, {"out", (r / "det").string()}});
    }
    for (const char* file : {"cf/national_cf.csv", "cf/layout.csv", "det/events.csv", "det/yearly_counts.csv",
                             "det/monthly_climatology.csv", "det/duration_histogram.csv"}) {
        CHECK_MESSAGE(slurp(tmp / "a" / file) == slurp(tmp / "b" / file), file);
    }
    CHECK(slurp(tmp / "a" / "cf" / "cf_solar_pv" / "data.f32le") ==
          slurp(tmp / "b" / "cf" / "cf_solar_pv" / "data.f32le"));
}

TEST_CASE("detect on crafted series") {
    testing::TempDir tmp("det");
    write_series(tmp / "high.csv", std::vector<double>(400, 0.5));
    run("detect", {{"input", (tmp / "high.csv").string()}, {"out", (tmp / "high").string()}});
    CHECK(slurp(tmp / "high" / "events.csv") == "start_iso8601,duration_hours,min_cf,mean_cf\n");

    std::vector<double> v(400, 0.5);
    for (std::size_t i = 50; i < 60; ++i) v[i] = 0.01;
    for (std::size_t i = 200; i < 208; ++i) v[i] = 0.02;
    write_series(tmp / "dips.csv", v);
    run("detect", {{"input", (tmp / "dips.csv").string()}, {"out", (tmp / "dips").string()}});
    const EventList ev = read_events_csv(tmp / "dips" / "events.csv");
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].duration_hours == 60.0);
    CHECK(ev[1].duration_hours == 48.0);

    std::vector<std::string> warnings;
    run("detect", {{"input", (tmp / "dips.csv").string()}, {"out", (tmp / "d2").string()}}, &warnings);
    CHECK_FALSE(warnings.empty());  // under one calendar year: no climatology
    CHECK_FALSE(fs::exists(tmp / "d2" / "monthly_climatology.csv"));
}

TEST_CASE("malformed series names the line") {
    testing::TempDir tmp("det");
    std::ofstream(tmp / "bad.csv") << "time,cf\n2000-01-01T00:00:00Z,0.5\n2000-01-01T06:00:00Z,0.5\n"
                                      "2000-01-01T12:00:00Z,abc\n";
    const auto f = [&] { run("detect", {{"input", (tmp / "bad.csv").string()}, {"out", (tmp / "o").string()}}); };
    CHECK(code_of(f) == ErrorCode::ParseError);
    CHECK(message_of(f).find("line 4") != std::string::npos);
}

TEST_CASE("ingest long-format csv") {
    testing::TempDir tmp("ing");
    {
        std::ofstream out(tmp / "tas.csv");
        out << "time,lat,lon,value\n";
        for (int t = 0; t < 4; ++t)
            for (double lat : {50.0, 50.25})
                for (double lon : {9.0, 9.25}) out << to_iso8601(946684800 + t * 21600) << ',' << lat << ',' << lon << ',' << 270 + t << '\n';
    }
    run("ingest", {{"input", (tmp / "tas.csv").string()}, {"out", (tmp / "g").string()}, {"variable", "tas"},
                   {"temporal_factor", 2}});
    const GridField f = load_gridpack(tmp / "g" / "tas");
    CHECK(f.axes.n_time == 2);
    CHECK(f.values[0] == 270.5f);
    CHECK(f.axes.time_step_s == 43200);

    std::ofstream(tmp / "gap.csv") << "time,lat,lon,value\n2000-01-01T00:00:00Z,50,9,1\n2000-01-01T00:00:00Z,50,9.25,1\n"
                                      "2000-01-01T00:00:00Z,50.25,9,1\n";
    CHECK(code_of([&] {
              run("ingest", {{"input", (tmp / "gap.csv").string()}, {"out", (tmp / "g2").string()},
                             {"variable", "tas"}});
          }) == ErrorCode::ParseError);
    CHECK(code_of([&] {
              run("ingest", {{"input", (tmp / "tas.csv").string()}, {"out", (tmp / "g3").string()},
                             {"variable", "tas"}, {"units", "degC"}});
          }) == ErrorCode::UnitError);
}

TEST_CASE("bias correction stage") {
    testing::TempDir tmp("bc");
    const fs::path tas = weather_dir() / "tas";
    run("biascorrect", {{"model", tas.string()}, {"ref", tas.string()}, {"apply", tas.string()},
                        {"out", (tmp / "bc").string()}});
    const GridField a = load_gridpack(tas), b = load_gridpack(tmp / "bc" / "tas");
    REQUIRE(a.values.size() == b.values.size());
    bool same = true;
    for (std::size_t k = 0; k < a.values.size(); ++k) same = same && std::abs(a.values[k] - b.values[k]) < 1e-3f;
    CHECK(same);
    CHECK(fs::exists(tmp / "bc" / "maps.json"));
}

TEST_CASE("train and downscale a toy model") {
    testing::TempDir tmp("fm");
    const json tp = run("train", {{"input", weather_dir().string()},
                                  {"out", (tmp / "model").string()},
                                  {"variables", {"tas"}},
                                  {"seq_len", 4},
                                  {"grid", "4x4"},
                                  {"steps", 30},
                                  {"hidden", 8},
                                  {"blocks", 1},
                                  {"obs_spatial_factor", 2},
                                  {"obs_temporal_factor", 2},
                                  {"stride", 8}});
    CHECK(tp.at("n_params").get<std::size_t>() > 0);
    CHECK(fs::exists(tmp / "model" / "loss.csv"));

    // Coarse input: 40 days of tas at the model's coarse resolution.
    run("ingest", {{"input", (weather_dir() / "tas").string()},
                   {"out", (tmp / "coarse").string()},
                   {"spatial_factor", 2},
                   {"temporal_factor", 2}});
    GridField c = load_gridpack(tmp / "coarse" / "tas");
    c.axes.n_time = 80;
    c.values.resize(c.axes.size());
    save_gridpack(c, tmp / "coarse" / "tas");

    for (const char* tag : {"a", "b"}) {
        run("downscale", {{"checkpoint", (tmp / "model").string()},
                          {"input", (tmp / "coarse").string()},
                          {"out", (tmp / tag).string()},
                          {"samples", 2},
                          {"n_steps", 8},
                          {"seed", 3}});
    }
    const GridField s0 = load_gridpack(tmp / "a" / "sample_000" / "tas");
    CHECK(s0.axes.n_time == 160);
    CHECK(s0.axes.n_lat() == 4);
    CHECK(s0.axes.n_lon() == 4);
    CHECK(fs::exists(tmp / "a" / "sample_001" / "tas"));
    CHECK(load_gridpack(tmp / "a" / "mean" / "tas").axes == s0.axes);
    CHECK(slurp(tmp / "a" / "sample_000" / "tas" / "data.f32le") ==
          slurp(tmp / "b" / "sample_000" / "tas" / "data.f32le"));

    CHECK(code_of([&] {
              run("downscale", {{"checkpoint", (tmp / "model").string()},
                                {"input", weather_dir().string()},
                                {"out", (tmp / "bad").string()}});
          }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("risk maps, ensembles and the report") {
    testing::TempDir tmp("risk");
    run("synth", {{"out", (tmp / "w2").string()}, {"years", 2}, {"seed", 12}});
    run("cf", {{"input", weather_dir().string()}, {"out", (tmp / "cf1").string()}});
    run("cf", {{"input", (tmp / "w2").string()}, {"out", (tmp / "cf2").string()}});
    run("detect", {{"input", (tmp / "cf1").string()}, {"out", (tmp / "det").string()}});

    json manifest{{"members",
                   {{{"id", "m1"}, {"scenario", "historical"}, {"path", "cf1"}},
                    {{"id", "m2"}, {"scenario", "historical"}, {"path", "cf2"}}}}};
    std::ofstream(tmp / "manifest.json") << manifest.dump();
    run("riskmap", {{"manifest", (tmp / "manifest.json").string()}, {"out", (tmp / "ens").string()}});
    CHECK(fs::exists(tmp / "ens" / "members" / "m1"));
    CHECK(fs::exists(tmp / "ens" / "ensemble_historical.csv"));

    json one{{"members", {{{"id", "m1"}, {"path", "cf1"}}}}};
    std::ofstream(tmp / "one.json") << one.dump();
    CHECK(code_of([&] {
              run("riskmap", {{"manifest", (tmp / "one.json").string()}, {"out", (tmp / "x").string()}});
          }) == ErrorCode::TooFewMembers);
    CHECK(code_of([&] { run("riskmap", {{"out", (tmp / "x").string()}}); }) == ErrorCode::InvalidArgument);

    run("riskmap", {{"cf_dir", (tmp / "cf1").string()}, {"out", (tmp / "risk").string()}});
    const json cfg{{"events", (tmp / "det").string()},
                   {"riskmap", (tmp / "risk").string()},
                   {"out", (tmp / "report.json").string()}};
    run("report", cfg);
    const std::string first = slurp(tmp / "report.json");
    const json rep = json::parse(first);
    CHECK(rep.at("schema_version") == "1.0");
    CHECK(rep.at("risk_maps").size() == 1);
    int total = 0;
    for (const json& y : rep.at("yearly_counts")) total += y.at("count").get<int>();
    CHECK(total == rep.at("events").at("count").get<int>());
    run("report", cfg);
    CHECK(slurp(tmp / "report.json") == first);

    fs::remove(tmp / "det" / "events.csv");
    CHECK(code_of([&] { run("report", cfg); }) == ErrorCode::StageMissing);
}

#ifdef FLAUTE_CLI_PATH
TEST_CASE("command-line exit codes and messages") {
    testing::TempDir tmp("cli");
    CHECK(cli("--version", tmp.path()).status == 0);
    CHECK(cli("detect --bogus 1", tmp.path()).status == 2);
    CHECK(cli("", tmp.path()).status == 2);
    CHECK(cli("detect --out " + (tmp / "o").string() + " --window-hours abc --input x", tmp.path()).status == 2);

    const CliResult missing = cli("detect --input " + (tmp / "nothing.csv").string() + " --out " +
                                      (tmp / "o").string(),
                                  tmp.path());
    CHECK(missing.status == int(ErrorCode::MissingFile));
    CHECK(missing.err.find("MissingFile") != std::string::npos);

    std::ofstream(tmp / "bad.csv") << "time,cf\n2000-01-01T00:00:00Z,zz\n";
    const CliResult bad =
        cli("detect --input " + (tmp / "bad.csv").string() + " --out " + (tmp / "o").string(), tmp.path());
    CHECK(bad.status == int(ErrorCode::ParseError));
    CHECK(bad.err.find("line 2") != std::string::npos);

    write_series(tmp / "s.csv", std::vector<double>(100, 0.5));
    std::ofstream(tmp / "cfg.json") << json{{"window_hours", 24}, {"threshold", 0.3}}.dump();
    const CliResult ok = cli("detect --config " + (tmp / "cfg.json").string() + " --threshold 0.4 --input " +
                                 (tmp / "s.csv").string() + " --out " + (tmp / "o").string(),
                             tmp.path());
    CHECK(ok.status == 0);
    // Precedence: flag over file over default, echoed at startup.
    CHECK(ok.err.find("\"threshold\":0.4") != std::string::npos);
    CHECK(ok.err.find("\"window_hours\":24") != std::string::npos);
    CHECK(ok.err.find("config_hash") != std::string::npos);
    const json prov = json::parse(slurp(tmp / "o" / "provenance.json"));
    CHECK(prov.at("config").at("threshold") == 0.4);
}
#endif
