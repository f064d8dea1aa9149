#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "farfield/error.hpp"
#include "farfield/segments.hpp"

namespace farfield {

struct DerReport {
    double scored_speech_s = 0.0;
    double miss_s = 0.0;
    double false_alarm_s = 0.0;
    double speaker_error_s = 0.0;
    double miss_pct = 0.0;
    double false_alarm_pct = 0.0;
    double speaker_error_pct = 0.0;
    /// miss_pct + false_alarm_pct + speaker_error_pct.
    double der = 0.0;
    /// Hypothesis speaker -> reference speaker. Unmapped hypothesis speakers
    /// are absent.
    std::map<std::string, std::string> mapping;
};

/// Assignment of rows to columns maximizing the summed gain. Returns the
/// column per row, or -1 for an unassigned row.
inline std::vector<int> max_gain_assignment_exhaustive(const std::vector<std::vector<double>>& gain,
                                                       std::size_t cols) {
    const std::size_t rows = gain.size();
    std::vector<int> best(rows, -1), cur(rows, -1);
    std::vector<bool> used(cols, false);
    double best_sum = -1.0;
    auto rec = [&](auto&& self, std::size_t r, double sum) -> void {
        if (r == rows) {
            if (sum > best_sum) {
                best_sum = sum;
                best = cur;
            }
            return;
        }
        cur[r] = -1;
        self(self, r + 1, sum);
        for (std::size_t c = 0; c < cols; ++c) {
            if (used[c]) continue;
            used[c] = true;
            cur[r] = static_cast<int>(c);
            self(self, r + 1, sum + gain[r][c]);
            used[c] = false;
        }
        cur[r] = -1;
    };
    rec(rec, 0, 0.0);
    return best;
}

/// Hungarian algorithm on the square padding of the gain matrix.
inline std::vector<int> max_gain_assignment_hungarian(const std::vector<std::vector<double>>& gain,
                                                      std::size_t cols) {
    const std::size_t rows = gain.size();
    const std::size_t n = std::max(rows, cols);
    if (n == 0) return {};
    double top = 0.0;
    for (const auto& row : gain)
        for (double g : row) top = std::max(top, g);
    // cost[i][j], 1-based for the classic potentials formulation
    auto cost = [&](std::size_t i, std::size_t j) {
        const double g = (i - 1 < rows && j - 1 < cols) ? gain[i - 1][j - 1] : 0.0;
        return top - g;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> out(rows, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] >= 1 && p[j] <= rows && j <= cols && gain[p[j] - 1][j - 1] > 0.0)
            out[p[j] - 1] = static_cast<int>(j - 1);
    return out;
}

inline std::vector<int> max_gain_assignment(const std::vector<std::vector<double>>& gain, std::size_t cols) {
    if (gain.size() <= 6 && cols <= 6) return max_gain_assignment_exhaustive(gain, cols);
    return max_gain_assignment_hungarian(gain, cols);
}

namespace detail {

/// Homogeneous stretch of the timeline: constant reference and hypothesis
/// speaker sets, entirely inside or outside the collar zones.
struct ScoredRegion {
    double duration;
    std::vector<int> ref;
    std::vector<int> hyp;
};

inline std::vector<int> active_at(const SegmentList& segs, const std::vector<std::string>& ids, double t) {
    std::vector<int> out;
    for (const auto& s : segs.entries) {
        if (s.onset <= t && t < s.end()) {
            const int k = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), s.speaker) - ids.begin());
            if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
        }
    }
    return out;
}

}  // namespace detail

/// Diarization error rate with a forgiveness collar around every reference
/// boundary. Overlapped speech is scored; the speaker mapping maximizes the
/// correctly attributed time.
inline DerReport der(const SegmentList& reference, const SegmentList& hypothesis, double collar_s = 0.25) {
    require(collar_s >= 0.0, "collar must be non-negative");
    reference.validate();
    hypothesis.validate();
    const std::string ref_session = reference.session();
    const std::string hyp_session = hypothesis.session();
    if (!ref_session.empty() && !hyp_session.empty() && ref_session != hyp_session)
        throw PreconditionError("session mismatch: reference '" + ref_session + "' vs hypothesis '" + hyp_session +
                                "'");

    const auto ref_ids = reference.speakers();
    const auto hyp_ids = hypothesis.speakers();

    std::vector<double> ref_bounds;
    for (const auto& s : reference.entries) {
        ref_bounds.push_back(s.onset);
        ref_bounds.push_back(s.end());
    }
    std::vector<double> points = ref_bounds;
    for (const auto& s : hypothesis.entries) {
        points.push_back(s.onset);
        points.push_back(s.end());
    }
    if (collar_s > 0.0) {
        for (double b : ref_bounds) {
            points.push_back(b - collar_s);
            points.push_back(b + collar_s);
        }
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    std::sort(ref_bounds.begin(), ref_bounds.end());

    std::vector<detail::ScoredRegion> regions;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double a = points[i], b = points[i + 1];
        const double mid = 0.5 * (a + b);
        if (collar_s > 0.0) {
            const auto it = std::upper_bound(ref_bounds.begin(), ref_bounds.end(), mid - collar_s);
            if (it != ref_bounds.end() && *it < mid + collar_s) continue;
        }
        auto r = detail::active_at(reference, ref_ids, mid);
        auto h = detail::active_at(hypothesis, hyp_ids, mid);
        if (r.empty() && h.empty()) continue;
        regions.push_back({b - a, std::move(r), std::move(h)});
    }

    std::vector<std::vector<double>> overlap(hyp_ids.size(), std::vector<double>(ref_ids.size(), 0.0));
    for (const auto& reg : regions)
        for (int h : reg.hyp)
            for (int r : reg.ref) overlap[static_cast<std::size_t>(h)][static_cast<std::size_t>(r)] += reg.duration;
    const auto assign = max_gain_assignment(overlap, ref_ids.size());

    DerReport rep;
    for (const auto& reg : regions) {
        const double nr = static_cast<double>(reg.ref.size());
        const double nh = static_cast<double>(reg.hyp.size());
        double correct = 0.0;
        for (int h : reg.hyp) {
            const int m = assign[static_cast<std::size_t>(h)];
            if (m >= 0 && std::find(reg.ref.begin(), reg.ref.end(), m) != reg.ref.end()) correct += 1.0;
        }
        rep.scored_speech_s += reg.duration * nr;
        rep.miss_s += reg.duration * std::max(0.0, nr - nh);
        rep.false_alarm_s += reg.duration * std::max(0.0, nh - nr);
        rep.speaker_error_s += reg.duration * (std::min(nr, nh) - correct);
    }
    if (!(rep.scored_speech_s > 0.0))
        throw ProcessingError("DER undefined: no reference speech remains after collar exclusion");
    rep.miss_pct = 100.0 * rep.miss_s / rep.scored_speech_s;
    rep.false_alarm_pct = 100.0 * rep.false_alarm_s / rep.scored_speech_s;
    rep.speaker_error_pct = 100.0 * rep.speaker_error_s / rep.scored_speech_s;
    rep.der = rep.miss_pct + rep.false_alarm_pct + rep.speaker_error_pct;
    for (std::size_t h = 0; h < hyp_ids.size(); ++h)
        if (assign[h] >= 0) rep.mapping[hyp_ids[h]] = ref_ids[static_cast<std::size_t>(assign[h])];
    return rep;
}

}  // namespace farfield
