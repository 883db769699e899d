#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "flaute/timeutil.hpp"

namespace flaute {

/// Regularly sampled capacity-factor series (national or per cell).
struct CfSeries {
    EpochSeconds time_start = 0;
    std::int64_t time_step_s = 21600;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    EpochSeconds time(std::size_t i) const { return time_start + std::int64_t(i) * time_step_s; }
};

/// CSV with header "time,cf", ISO-8601 timestamps. Values printed with %.17g.
void write_series_csv(const CfSeries& s, std::ostream& out);
void write_series_csv(const CfSeries& s, const std::filesystem::path& path);

/// Throws ParseError naming the offending line. Timestamps must be regular.
CfSeries read_series_csv(std::istream& in);
CfSeries read_series_csv(const std::filesystem::path& path);

/// Rows of a headed CSV without quoting. Every row must have as many fields as
/// the expected header; blank lines are skipped. ParseError names the line.
struct CsvTable {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& header);

/// Strict full-field parse; ParseError with the given line number otherwise.
double parse_double_field(std::string_view text, std::size_t line);
long long parse_int_field(std::string_view text, std::size_t line);

/// %.17g formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace flaute
