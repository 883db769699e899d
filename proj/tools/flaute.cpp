// Command-line front end. Every subcommand maps one-to-one onto a pipeline
// command; options are generated from the command's default config so the
// flag set and the config-file keys cannot drift apart.

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "flaute/error.hpp"
#include "flaute/pipeline.hpp"

namespace {

using nlohmann::json;

const std::map<std::string, std::string> kSummaries{
    {"synth", "generate synthetic weather gridpacks and region polygons"},
    {"ingest", "convert a long-format CSV or gridpack into a validated gridpack"},
    {"cf", "per-cell capacity factors, capacity layout and national CF series"},
    {"detect", "Dunkelflaute events, yearly counts and monthly climatology"},
    {"biascorrect", "fit and apply empirical quantile mapping"},
    {"train", "train the flow-matching downscaler"},
    {"downscale", "guided sampling of fine fields from coarse inputs"},
    {"riskmap", "per-cell event counts, ensemble statistics and differences"},
    {"report", "machine-readable summary of detection and risk outputs"},
};

// Options whose default is null but whose value is an integer.
const std::set<std::string> kNullIntegers{"period_start_year", "period_end_year"};

std::string flag_of(std::string key) {
    for (char& c : key) {
        if (c == '_') c = '-';
    }
    return "--" + key;
}

json convert(const std::string& key, const json& def, const std::string& text) {
    try {
        if (def.is_array()) {
            json arr = json::array();
            std::size_t pos = 0;
            while (pos <= text.size()) {
                const auto comma = text.find(',', pos);
                arr.push_back(text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            return arr;
        }
        if (def.is_boolean()) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw std::invalid_argument("bool");
        }
        std::size_t used = 0;
        if (def.is_number_unsigned()) {
            if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
            const auto v = std::stoull(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
        if (def.is_number_integer() || kNullIntegers.count(key)) {
            const auto v = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
        if (def.is_number_float()) {
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
    } catch (const std::exception&) {
        throw flaute::Error(flaute::ErrorCode::InvalidArgument, "bad value '" + text + "' for " + flag_of(key));
    }
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flaute: renewable-energy drought analytics on gridded weather"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(flaute::kVersion));

    struct Sub {
        CLI::App* app;
        std::string config_path;
        std::map<std::string, std::string> values;
    };
    std::map<std::string, Sub> subs;
    for (const std::string& name : flaute::command_names()) {
        Sub& s = subs[name];
        s.app = app.add_subcommand(name, kSummaries.at(name));
        s.app->add_option("--config", s.config_path, "JSON config file; flags override its values");
        const json defaults = flaute::default_config(name);
        for (const auto& [key, def] : defaults.items()) {
            std::string desc = def.is_null() ? "(no default)" : "default " + def.dump();
            s.app->add_option(flag_of(key), s.values[key], desc);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : int(flaute::ErrorCode::InvalidArgument);
    }

    for (auto& [name, s] : subs) {
        if (!s.app->parsed()) continue;
        try {
            json file = nullptr;
            if (!s.config_path.empty()) {
                std::ifstream in(s.config_path);
                if (!in) throw flaute::Error(flaute::ErrorCode::MissingFile, s.config_path);
                try {
                    file = json::parse(in);
                } catch (const json::exception& e) {
                    throw flaute::Error(flaute::ErrorCode::ParseError, s.config_path + ": " + e.what());
                }
            }
            const json defaults = flaute::default_config(name);
            json overrides = json::object();
            for (const auto& [key, text] : s.values) {
                if (s.app->get_option(flag_of(key))->count() > 0) overrides[key] = convert(key, defaults.at(key), text);
            }
            const json cfg = flaute::resolve_config(name, file, overrides);
            std::cerr << "flaute " << name << " config: " << cfg.dump() << '\n';
            std::vector<std::string> warnings;
            const json prov = flaute::run_command(name, cfg, &warnings);
            for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
            std::cerr << "config_hash " << prov.value("config_hash", "") << '\n';
        } catch (const flaute::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return int(e.code());
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return int(flaute::ErrorCode::IoError);
        }
    }
    return 0;
}
