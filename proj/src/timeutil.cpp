#include "flaute/timeutil.hpp"

#include <chrono>
#include <charconv>
#include <cstdio>

#include "flaute/error.hpp"

namespace flaute {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

CivilTime to_civil(EpochSeconds t) {
    using namespace std::chrono;
    const std::int64_t day_index = floor_div(t, kSecondsPerDay);
    const std::int64_t sod = t - day_index * kSecondsPerDay;
    const year_month_day ymd{sys_days{days{day_index}}};
    CivilTime c;
    c.year = int(ymd.year());
    c.month = unsigned(ymd.month());
    c.day = unsigned(ymd.day());
    c.hour = unsigned(sod / 3600);
    c.minute = unsigned((sod % 3600) / 60);
    c.second = unsigned(sod % 60);
    return c;
}

EpochSeconds from_civil(const CivilTime& c) {
    using namespace std::chrono;
    const year_month_day ymd{year{c.year}, month{c.month}, day{c.day}};
    if (!ymd.ok() || c.hour > 23 || c.minute > 59 || c.second > 60) {
        throw Error(ErrorCode::ParseError, "invalid calendar time");
    }
    const std::int64_t d = sys_days{ymd}.time_since_epoch().count();
    return d * kSecondsPerDay + std::int64_t(c.hour) * 3600 + std::int64_t(c.minute) * 60 + c.second;
}

int hour_of_day(EpochSeconds t) {
    return int(((t / 3600) % 24 + 24) % 24);
}

int month_of(EpochSeconds t) { return int(to_civil(t).month); }

int year_of(EpochSeconds t) { return to_civil(t).year; }

std::string to_iso8601(EpochSeconds t) {
    const CivilTime c = to_civil(t);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02u:%02u:%02uZ", c.year, c.month, c.day, c.hour,
                  c.minute, c.second);
    return buf;
}

EpochSeconds parse_iso8601(std::string_view text) {
    auto fail = [&]() -> EpochSeconds {
        throw Error(ErrorCode::ParseError, "bad ISO-8601 timestamp '" + std::string(text) + "'");
    };
    if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
        if (pos + len > text.size()) return false;
        const char* b = text.data() + pos;
        auto r = std::from_chars(b, b + len, out);
        return r.ec == std::errc{} && r.ptr == b + len;
    };
    CivilTime c;
    if (text.size() != 10 && text.size() != 19) return fail();
    if (!field(0, 4, c.year) || text[4] != '-' || !field(5, 2, c.month) || text[7] != '-' ||
        !field(8, 2, c.day)) {
        return fail();
    }
    if (text.size() == 19) {
        if ((text[10] != 'T' && text[10] != ' ') || !field(11, 2, c.hour) || text[13] != ':' ||
            !field(14, 2, c.minute) || text[16] != ':' || !field(17, 2, c.second)) {
            return fail();
        }
    }
    return from_civil(c);
}

}  // namespace flaute
