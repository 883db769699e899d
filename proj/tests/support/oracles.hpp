// Independent reference implementations used by the unit and acceptance
// tests. Each one is written as the most literal loop over the definition,
// sharing no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Event {
    std::int64_t start;
    double duration_hours;
    double min_cf;
    double mean_cf;
};

// Enumerates every trailing window, thresholds its mean, and scans runs.
inline std::vector<Event> brute_force_events(const std::vector<double>& raw, std::int64_t t0, std::int64_t step_s,
                                             std::size_t w, double threshold) {
    std::vector<Event> out;
    if (raw.size() < w) return out;
    const std::size_t n = raw.size() - w + 1;
    std::vector<double> smooth(n);
    std::vector<bool> below(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = k; i < k + w; ++i) s += raw[i];
        smooth[k] = s / double(w);
        below[k] = smooth[k] < threshold;
    }
    const double step_h = double(step_s) / 3600.0;
    std::size_t k = 0;
    while (k < n) {
        if (!below[k]) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e < n && below[e]) ++e;
        Event ev{};
        ev.start = t0 + std::int64_t(k) * step_s;  // first raw sample of the first window
        ev.duration_hours = double(e - k) * step_h + double(w - 1) * step_h;
        ev.min_cf = smooth[k];
        double sum = 0.0;
        for (std::size_t i = k; i < e; ++i) {
            ev.min_cf = std::min(ev.min_cf, smooth[i]);
            sum += smooth[i];
        }
        ev.mean_cf = sum / double(e - k);
        out.push_back(ev);
        k = e;
    }
    return out;
}

// Nested-loop block mean over (t, i, j) row-major data.
inline std::vector<double> block_mean(const std::vector<double>& v, std::size_t nt, std::size_t ny, std::size_t nx,
                                      std::size_t sf, std::size_t tf) {
    std::vector<double> out((nt / tf) * (ny / sf) * (nx / sf), 0.0);
    for (std::size_t T = 0; T < nt / tf; ++T)
        for (std::size_t I = 0; I < ny / sf; ++I)
            for (std::size_t J = 0; J < nx / sf; ++J) {
                double s = 0.0;
                for (std::size_t t = T * tf; t < (T + 1) * tf; ++t)
                    for (std::size_t i = I * sf; i < (I + 1) * sf; ++i)
                        for (std::size_t j = J * sf; j < (J + 1) * sf; ++j) s += v[(t * ny + i) * nx + j];
                out[(T * (ny / sf) + I) * (nx / sf) + J] = s / double(sf * sf * tf);
            }
    return out;
}

// sum_k sum_i w[k][i] * cf[k][t * nc + i] for each t.
inline std::vector<double> weighted_series(const std::vector<std::vector<double>>& w,
                                           const std::vector<std::vector<double>>& cf, std::size_t nt) {
    std::vector<double> out(nt, 0.0);
    const std::size_t nc = w[0].size();
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t k = 0; k < w.size(); ++k)
            for (std::size_t i = 0; i < nc; ++i) out[t] += w[k][i] * cf[k][t * nc + i];
    return out;
}

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
    }
    return d;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

// Posterior of a = (x1 + x2) / 2 given y = a + N(0, sy^2) under x ~ N(mu, S).
struct ScalarPosterior {
    double mean;
    double var;
};
inline ScalarPosterior mean_obs_posterior(double mu1, double mu2, double s11, double s12, double s22, double sy,
                                          double y) {
    const double ma = 0.5 * (mu1 + mu2);
    const double va = 0.25 * (s11 + 2.0 * s12 + s22);
    const double gain = va / (va + sy * sy);
    return {ma + gain * (y - ma), va - gain * va};
}

}  // namespace oracle
