#pragma once

// Reference implementations used only by the tests. They are written the slow,
// obvious way so they can check the fast library code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "farfield/farfield.hpp"

namespace oracle {

inline farfield::MultichannelWave random_wave(std::mt19937_64& rng, std::size_t channels, std::size_t samples,
                                              int rate = 16000, double scale = 0.5) {
    std::normal_distribution<double> nd(0.0, scale / 3.0);
    farfield::MultichannelWave w;
    w.sample_rate = rate;
    w.channels.assign(channels, std::vector<double>(samples));
    for (auto& ch : w.channels)
        for (auto& v : ch) v = std::clamp(nd(rng), -1.0, 1.0);
    return w;
}

/// sum_n x[n] * y[n + lag]
inline double correlation_at(const std::vector<double>& x, const std::vector<double>& y, long lag) {
    double s = 0.0;
    for (long n = 0; n < static_cast<long>(x.size()); ++n) {
        const long m = n + lag;
        if (m >= 0 && m < static_cast<long>(y.size())) s += x[static_cast<std::size_t>(n)] * y[static_cast<std::size_t>(m)];
    }
    return s;
}

/// Exhaustive lag search with the documented tie rules: larger correlation,
/// then smaller |lag|, then negative lag.
inline std::pair<long, double> brute_force_lag(const std::vector<double>& x, const std::vector<double>& y,
                                               long max_lag) {
    double ex = 0.0, ey = 0.0;
    for (double v : x) ex += v * v;
    for (double v : y) ey += v * v;
    const double norm = std::sqrt(ex * ey);
    long best = 0;
    double best_r = -std::numeric_limits<double>::infinity();
    for (long l = -max_lag; l <= max_lag; ++l) {
        const double r = correlation_at(x, y, l) / norm;
        const bool better = r > best_r + 1e-12 ||
                            (std::abs(r - best_r) <= 1e-12 &&
                             (std::abs(l) < std::abs(best) || (std::abs(l) == std::abs(best) && l < best)));
        if (better) {
            best_r = r;
            best = l;
        }
    }
    return {best, best_r};
}

/// Frame-level DER at `step` seconds: frames whose center is within `collar`
/// of any reference boundary are skipped; every injective mapping of
/// hypothesis to reference speakers is tried and the best kept.
inline double brute_force_der(const farfield::SegmentList& ref, const farfield::SegmentList& hyp, double collar,
                              double step = 0.001) {
    const auto rs = ref.speakers(), hs = hyp.speakers();
    double end = 0.0;
    std::vector<double> bounds;
    for (const auto& s : ref.entries) {
        end = std::max(end, s.end());
        bounds.push_back(s.onset);
        bounds.push_back(s.end());
    }
    for (const auto& s : hyp.entries) end = std::max(end, s.end());
    std::sort(bounds.begin(), bounds.end());
    const auto frames = static_cast<std::size_t>(std::ceil(end / step)) + 1;

    // activity [frame] as speaker index sets
    auto active = [&](const farfield::SegmentList& l, const std::vector<std::string>& ids, double t) {
        std::vector<int> a;
        for (std::size_t k = 0; k < ids.size(); ++k)
            for (const auto& s : l.entries)
                if (s.speaker == ids[k] && t >= s.onset && t < s.end()) {
                    a.push_back(static_cast<int>(k));
                    break;
                }
        return a;
    };
    std::vector<std::vector<int>> ra, ha;
    std::vector<bool> keep;
    for (std::size_t i = 0; i < frames; ++i) {
        const double t = (static_cast<double>(i) + 0.5) * step;
        bool excluded = false;
        for (double b : bounds)
            if (std::abs(t - b) < collar) {
                excluded = true;
                break;
            }
        keep.push_back(!excluded);
        ra.push_back(active(ref, rs, t));
        ha.push_back(active(hyp, hs, t));
    }

    // all injective partial maps hyp -> ref (-1 = unmapped)
    std::vector<int> map(hs.size(), -1);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t)> rec = [&](std::size_t h) {
        if (h == hs.size()) {
            double total = 0.0, err = 0.0;
            for (std::size_t i = 0; i < frames; ++i) {
                if (!keep[i]) continue;
                const double nr = static_cast<double>(ra[i].size()), nh = static_cast<double>(ha[i].size());
                double correct = 0.0;
                for (int hk : ha[i])
                    if (map[static_cast<std::size_t>(hk)] >= 0 &&
                        std::find(ra[i].begin(), ra[i].end(), map[static_cast<std::size_t>(hk)]) != ra[i].end())
                        correct += 1.0;
                total += nr;
                err += std::max(nr, nh) - correct;
            }
            best = std::min(best, total > 0 ? 100.0 * err / total : 0.0);
            return;
        }
        for (int r = -1; r < static_cast<int>(rs.size()); ++r) {
            if (r >= 0 && std::find(map.begin(), map.begin() + static_cast<std::ptrdiff_t>(h), r) !=
                              map.begin() + static_cast<std::ptrdiff_t>(h))
                continue;
            map[h] = r;
            rec(h + 1);
        }
        map[h] = -1;
    };
    rec(0);
    return best;
}

/// Random non-overlapping-per-speaker segmentation on a millisecond grid.
inline farfield::SegmentList random_segments(std::mt19937_64& rng, std::size_t speakers, double duration,
                                             const std::string& session = "S") {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    farfield::SegmentList out;
    for (std::size_t k = 0; k < speakers; ++k) {
        double t = std::round(u(rng) * 3000.0) / 1000.0;
        while (true) {
            const double d = std::round((0.5 + 4.0 * u(rng)) * 1000.0) / 1000.0;
            if (t + d > duration) break;
            out.add({session, "spk" + std::to_string(k), t, d});
            t += d + std::round((0.3 + 5.0 * u(rng)) * 1000.0) / 1000.0;
        }
    }
    return out;
}

inline double snr_db(double signal_power, double noise_power) {
    return 10.0 * std::log10(signal_power / noise_power);
}

inline double power(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

}  // namespace oracle
