#include "flaute/series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "flaute/error.hpp"

namespace flaute {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_series_csv(const CfSeries& s, std::ostream& out) {
    out << "time,cf\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << to_iso8601(s.time(i)) << ',' << format_double(s.values[i]) << '\n';
    }
}

void write_series_csv(const CfSeries& s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_series_csv(s, out);
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

CfSeries read_series_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) -> void {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + why);
    };
    if (!std::getline(in, line)) {
        lineno = 1;
        fail("missing header");
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "time,cf") fail("expected header 'time,cf'");

    CfSeries s;
    std::vector<EpochSeconds> times;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
            fail("expected two comma-separated fields");
        }
        EpochSeconds t = 0;
        try {
            t = parse_iso8601(std::string_view(line).substr(0, comma));
        } catch (const Error& e) {
            fail(e.what());
        }
        double v = 0.0;
        const char* b = line.data() + comma + 1;
        const char* e = line.data() + line.size();
        auto r = std::from_chars(b, e, v);
        if (r.ec != std::errc{} || r.ptr != e || !std::isfinite(v)) fail("bad numeric value");
        if (!times.empty()) {
            const std::int64_t step = times.size() == 1 ? t - times[0] : s.time_step_s;
            if (step <= 0 || t - times.back() != step) fail("irregular time step");
            s.time_step_s = step;
        }
        times.push_back(t);
        s.values.push_back(v);
    }
    if (!times.empty()) s.time_start = times.front();
    return s;
}

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (true) {
            const auto comma = line.find(',', pos);
            out.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    };
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header) {
            if (split(line) != header) {
                throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(lineno) +
                                                       ": unexpected header '" + line + "'");
            }
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = split(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(lineno) + ": expected " +
                                                   std::to_string(header.size()) + " fields");
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(lineno);
    }
    if (!have_header) throw Error(ErrorCode::ParseError, path.string() + " line 1: missing header");
    return table;
}

double parse_double_field(std::string_view text, std::size_t line) {
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" + std::string(text) + "'");
    }
    return v;
}

long long parse_int_field(std::string_view text, std::size_t line) {
    long long v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad integer '" + std::string(text) + "'");
    }
    return v;
}

CfSeries read_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    return read_series_csv(in);
}

}  // namespace flaute
