#include "flaute/detect.hpp"

#include <cmath>
#include <fstream>

#include "flaute/error.hpp"

namespace flaute {

std::size_t window_samples(int window_hours, std::int64_t time_step_s) {
    const std::int64_t window_s = std::int64_t(window_hours) * 3600;
    if (window_hours <= 0 || time_step_s <= 0 || window_s % time_step_s != 0) {
        throw Error(ErrorCode::InvalidArgument, "window of " + std::to_string(window_hours) +
                                                    " h is not a positive multiple of the " +
                                                    std::to_string(time_step_s) + " s step");
    }
    return std::size_t(window_s / time_step_s);
}

CfSeries rolling_mean(const CfSeries& series, int window_hours) {
    const std::size_t w = window_samples(window_hours, series.time_step_s);
    const std::size_t n = series.size();
    if (w > n) {
        throw Error(ErrorCode::WindowTooLarge,
                    "window of " + std::to_string(w) + " samples exceeds series length " + std::to_string(n));
    }
    CfSeries out;
    out.time_step_s = series.time_step_s;
    out.time_start = series.time(w - 1);
    out.values.resize(n - w + 1);
    // Direct window sums keep every output independent of accumulated drift.
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < w; ++m) s += series.values[k + m];
        out.values[k] = s / double(w);
    }
    return out;
}

EventList detect_events(const CfSeries& cf, const DetectionConfig& cfg, SeriesKind kind) {
    if (cf.values.empty()) throw Error(ErrorCode::EmptySeries, "capacity-factor series is empty");
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
    }
    const std::size_t w = window_samples(cfg.window_hours, cf.time_step_s);
    const CfSeries smoothed = kind == SeriesKind::raw ? rolling_mean(cf, cfg.window_hours) : cf;
    const double step_h = double(cf.time_step_s) / 3600.0;
    const double extra_h = double(cfg.window_hours) - step_h;
    const std::int64_t back = std::int64_t(w - 1) * cf.time_step_s;

    EventList events;
    const std::size_t n = smoothed.size();
    std::size_t k = 0;
    while (k < n) {
        if (!(smoothed.values[k] < cfg.threshold)) {
            ++k;
            continue;
        }
        const std::size_t begin = k;
        double lo = smoothed.values[k];
        double sum = 0.0;
        while (k < n && smoothed.values[k] < cfg.threshold) {
            lo = std::min(lo, smoothed.values[k]);
            sum += smoothed.values[k];
            ++k;
        }
        const std::size_t run = k - begin;
        events.push_back(Event{smoothed.time(begin) - back, double(run) * step_h + extra_h, lo, sum / double(run)});
    }
    return events;
}

std::map<int, int> events_per_year(const EventList& events, int first_year, int last_year) {
    std::map<int, int> counts;
    for (int y = first_year; y <= last_year; ++y) counts[y] = 0;
    for (const Event& e : events) {
        const int y = year_of(e.start);
        if (y < first_year || y > last_year) {
            throw Error(ErrorCode::InvalidArgument, "event in " + std::to_string(y) + " outside year range");
        }
        ++counts[y];
    }
    return counts;
}

YearRange full_years(const CfSeries& series) {
    if (series.values.empty()) return {};
    const EpochSeconds first = series.time(0);
    const EpochSeconds last_end = series.time(series.size() - 1) + series.time_step_s;
    int y0 = year_of(first);
    if (from_civil({y0, 1, 1}) < first) ++y0;
    // Year y is covered when it ends (Jan 1 of y+1) no later than last_end.
    const int y1 = year_of(last_end) - 1;
    return YearRange{y0, y1};
}

std::array<double, 12> monthly_climatology(const EventList& events, YearRange years) {
    if (years.count() < 1) throw Error(ErrorCode::InsufficientSpan, "need at least one full year");
    std::array<double, 12> clim{};
    for (const Event& e : events) {
        const CivilTime c = to_civil(e.start);
        if (c.year < years.first || c.year > years.last) continue;
        clim[c.month - 1] += 1.0;
    }
    for (double& v : clim) v /= double(years.count());
    return clim;
}

DurationHistogram duration_histogram(const EventList& events, double bin_hours) {
    if (!(bin_hours > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
    DurationHistogram h{bin_hours, {}};
    for (const Event& e : events) {
        const auto b = std::size_t(std::floor(e.duration_hours / bin_hours));
        if (h.counts.size() <= b) h.counts.resize(b + 1, 0);
        ++h.counts[b];
    }
    return h;
}

void write_events_csv(const EventList& events, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "start_iso8601,duration_hours,min_cf,mean_cf\n";
    for (const Event& e : events) {
        out << to_iso8601(e.start) << ',' << format_double(e.duration_hours) << ',' << format_double(e.min_cf) << ','
            << format_double(e.mean_cf) << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

EventList read_events_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path, {"start_iso8601", "duration_hours", "min_cf", "mean_cf"});
    EventList events;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        Event e;
        try {
            e.start = parse_iso8601(row[0]);
        } catch (const Error& err) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + err.what());
        }
        e.duration_hours = parse_double_field(row[1], line);
        e.min_cf = parse_double_field(row[2], line);
        e.mean_cf = parse_double_field(row[3], line);
        events.push_back(e);
    }
    return events;
}

}  // namespace flaute
