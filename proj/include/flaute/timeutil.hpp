#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace flaute {

/// UTC epoch seconds. No time-zone or DST handling anywhere in the toolkit.
using EpochSeconds = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct CivilTime {
    int year = 1970;
    unsigned month = 1;  // 1..12
    unsigned day = 1;    // 1..31
    unsigned hour = 0;
    unsigned minute = 0;
    unsigned second = 0;
};

CivilTime to_civil(EpochSeconds t);
EpochSeconds from_civil(const CivilTime& c);

/// Hour of day, (t / 3600) mod 24.
int hour_of_day(EpochSeconds t);
/// Calendar month 1..12.
int month_of(EpochSeconds t);
int year_of(EpochSeconds t);

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string to_iso8601(EpochSeconds t);
/// Accepts "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z', or a bare date.
/// Throws Error(ParseError) on malformed input.
EpochSeconds parse_iso8601(std::string_view text);

}  // namespace flaute
