#include "doctest.h"
#include "flaute/error.hpp"
#include "flaute/timeutil.hpp"

using namespace flaute;

TEST_CASE("civil conversion round-trips across leap years") {
    for (EpochSeconds t : {EpochSeconds(0), EpochSeconds(951782400), EpochSeconds(4107542400)}) {
        CHECK(from_civil(to_civil(t)) == t);
    }
    const CivilTime c = to_civil(951782400);  // 2000-02-29
    CHECK(c.year == 2000);
    CHECK(c.month == 2);
    CHECK(c.day == 29);
}

TEST_CASE("iso8601 formatting and parsing") {
    CHECK(to_iso8601(0) == "1970-01-01T00:00:00Z");
    CHECK(parse_iso8601("2000-01-01T06:00:00Z") == 946706400);
    CHECK(parse_iso8601("2000-01-01T06:00:00") == 946706400);
    CHECK(parse_iso8601("2000-01-01") == 946684800);
    CHECK_THROWS_AS(parse_iso8601("2000-13-01"), Error);
    CHECK_THROWS_AS(parse_iso8601("yesterday"), Error);
}

TEST_CASE("hour, month and year are UTC") {
    const EpochSeconds t = parse_iso8601("1997-11-30T18:00:00Z");
    CHECK(hour_of_day(t) == 18);
    CHECK(month_of(t) == 11);
    CHECK(year_of(t) == 1997);
    CHECK(hour_of_day(-3600) == 23);
}
