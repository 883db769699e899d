#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <vector>

#include "flaute/series.hpp"

namespace flaute {

struct DetectionConfig {
    int window_hours = 48;
    double threshold = 0.06;
};

/// One Dunkelflaute event. `start` is the first raw sample of the first
/// below-threshold window; min/mean are over the smoothed samples of the run.
struct Event {
    EpochSeconds start = 0;
    double duration_hours = 0.0;
    double min_cf = 0.0;
    double mean_cf = 0.0;

    bool operator==(const Event&) const = default;
};

using EventList = std::vector<Event>;

/// Window length in samples; throws InvalidArgument unless window_hours is a
/// positive multiple of the step.
std::size_t window_samples(int window_hours, std::int64_t time_step_s);

/// Trailing mean over `window_hours`; output sample k is stamped with the
/// window's last raw timestamp. Length n - w + 1. Throws WindowTooLarge.
CfSeries rolling_mean(const CfSeries& series, int window_hours);

enum class SeriesKind { raw, smoothed };

/// Maximal runs of smoothed samples strictly below the threshold. Duration is
/// run_length * step + (window - step). With SeriesKind::raw the rolling mean
/// is applied first. Throws EmptySeries.
EventList detect_events(const CfSeries& cf, const DetectionConfig& cfg, SeriesKind kind = SeriesKind::raw);

/// Counts by start year, every year of [first_year, last_year] present.
/// Throws InvalidArgument for events outside the range.
std::map<int, int> events_per_year(const EventList& events, int first_year, int last_year);

struct YearRange {
    int first = 0;
    int last = -1;
    int count() const { return last >= first ? last - first + 1 : 0; }
};

/// Calendar years completely covered by the series.
YearRange full_years(const CfSeries& series);

/// Mean events per calendar month per year over `years`. Events starting
/// outside the range are ignored. Throws InsufficientSpan for an empty range.
std::array<double, 12> monthly_climatology(const EventList& events, YearRange years);

struct DurationHistogram {
    double bin_hours = 24.0;
    std::vector<int> counts;  // bin b covers [b*bin_hours, (b+1)*bin_hours)
};

DurationHistogram duration_histogram(const EventList& events, double bin_hours);

/// Columns start_iso8601,duration_hours,min_cf,mean_cf.
void write_events_csv(const EventList& events, const std::filesystem::path& path);
EventList read_events_csv(const std::filesystem::path& path);

}  // namespace flaute
