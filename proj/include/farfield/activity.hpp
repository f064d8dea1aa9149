#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "farfield/error.hpp"
#include "farfield/segments.hpp"

namespace farfield {

/// Per-class per-frame activity prior in [0, 1]. Rows are the speakers in
/// `speakers` order followed by one noise class that is always active.
struct ActivityMatrix {
    std::vector<std::string> speakers;
    double frame_rate = 62.5;
    std::size_t frames = 0;
    std::vector<std::vector<double>> values;
    /// Segments that extended past the last frame and were clipped.
    std::size_t clipped_segments = 0;

    std::size_t classes() const { return speakers.size() + 1; }
    std::size_t noise_class() const { return speakers.size(); }

    int speaker_index(const std::string& id) const {
        const auto it = std::find(speakers.begin(), speakers.end(), id);
        return it == speakers.end() ? -1 : static_cast<int>(it - speakers.begin());
    }

    void validate() const {
        require(values.size() == classes(), "activity needs one row per speaker plus the noise row");
        for (const auto& row : values) {
            require(row.size() == frames, "activity row length differs from frame count");
            for (double v : row) require(v >= 0.0 && v <= 1.0, "activity values must lie in [0, 1]");
        }
        for (double v : values.back()) require(v == 1.0, "noise class must be active at every frame");
    }

    /// Raises every speaker entry to at least `floor`; the noise row is untouched.
    ActivityMatrix floored(double floor) const {
        ActivityMatrix out = *this;
        for (std::size_t k = 0; k + 1 < out.values.size(); ++k)
            for (double& v : out.values[k]) v = std::max(v, floor);
        return out;
    }
};

/// Center time of frame t, in seconds, for frames starting at `offset_s`.
inline double frame_center_s(std::size_t t, double frame_rate, double offset_s = 0.0) {
    return offset_s + static_cast<double>(t) / frame_rate;
}

/// Frame t is active for a speaker iff its center time falls inside one of
/// that speaker's segments. `speakers` fixes the row order; when empty the
/// sorted speaker ids of `segments` are used.
inline ActivityMatrix segments_to_activity(const SegmentList& segments, double frame_rate, std::size_t n_frames,
                                           std::vector<std::string> speakers = {}, double offset_s = 0.0) {
    require(frame_rate > 0.0, "frame rate must be positive");
    for (const auto& s : segments.entries) require(s.onset >= 0.0, "segment onset must be non-negative");
    if (speakers.empty()) speakers = segments.speakers();

    ActivityMatrix a;
    a.speakers = speakers;
    a.frame_rate = frame_rate;
    a.frames = n_frames;
    a.values.assign(speakers.size() + 1, std::vector<double>(n_frames, 0.0));
    std::fill(a.values.back().begin(), a.values.back().end(), 1.0);

    const double last_center = n_frames ? frame_center_s(n_frames - 1, frame_rate, offset_s) : offset_s;
    for (const auto& s : segments.entries) {
        const int k = a.speaker_index(s.speaker);
        if (k < 0) continue;
        if (s.end() > last_center + 1.0 / frame_rate) ++a.clipped_segments;
        // first frame whose center is >= onset, refined against the exact predicate
        auto first = static_cast<long>(std::ceil((s.onset - offset_s) * frame_rate)) - 1;
        first = std::max(first, 0L);
        while (first < static_cast<long>(n_frames) &&
               frame_center_s(static_cast<std::size_t>(first), frame_rate, offset_s) < s.onset)
            ++first;
        for (long t = first; t < static_cast<long>(n_frames); ++t) {
            if (frame_center_s(static_cast<std::size_t>(t), frame_rate, offset_s) >= s.end()) break;
            a.values[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] = 1.0;
        }
    }
    return a;
}

}  // namespace farfield
