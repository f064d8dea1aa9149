#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "farfield/activity.hpp"
#include "farfield/cacgmm.hpp"
#include "farfield/error.hpp"
#include "farfield/segments.hpp"
#include "farfield/stft.hpp"
#include "farfield/wave.hpp"

namespace farfield {

struct RectifyConfig {
    double window_s = 120.0;
    double shift_s = 60.0;
    double threshold = 0.5;
    std::size_t median_frames = 11;
    double min_segment_s = 0.2;
    double min_gap_s = 0.3;
    std::size_t em_iterations = 10;
    /// Prior given to speakers outside their annotated turns, so spatial
    /// evidence can move frames between speakers.
    double activity_floor = 0.1;
    StftConfig stft{};

    void validate() const {
        require(shift_s > 0.0 && shift_s <= window_s, "rectify needs 0 < shift_s <= window_s");
        require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
        require(median_frames % 2 == 1, "median_frames must be odd");
        require(min_segment_s >= 0.0 && min_gap_s >= 0.0, "post-processing durations must be non-negative");
        require(em_iterations >= 1, "need at least one EM iteration");
        require(activity_floor >= 0.0 && activity_floor <= 1.0, "activity_floor must lie in [0, 1]");
        stft.validate();
    }
};

struct FrameProbabilities {
    std::vector<std::string> speakers;
    double frame_rate = 62.5;
    std::size_t frames = 0;
    /// [speaker][frame]
    std::vector<std::vector<double>> probs;
    /// Number of windows that contributed to each frame.
    std::vector<std::size_t> coverage;
};

/// One analysis window of the sliding rectification.
struct WindowSpan {
    double start_s = 0.0;
    std::size_t begin_frame = 0;
    std::size_t end_frame = 0;
};

/// Tiles [0, duration] with windows every shift_s; the final window is
/// right-aligned to the end. A recording shorter than one window gets a
/// single window spanning all of it.
inline std::vector<WindowSpan> window_layout(double duration_s, std::size_t n_frames, double frame_rate,
                                             double window_s, double shift_s) {
    require(shift_s > 0.0 && shift_s <= window_s, "rectify needs 0 < shift_s <= window_s");
    std::vector<double> starts;
    if (duration_s <= window_s) {
        starts.push_back(0.0);
    } else {
        for (std::size_t k = 0;; ++k) {
            const double s = static_cast<double>(k) * shift_s;
            starts.push_back(s);
            if (s + window_s >= duration_s) break;
        }
        const double last = duration_s - window_s;
        if (starts.back() + window_s > duration_s) starts.back() = last;
        if (starts.size() >= 2 && starts.back() <= starts[starts.size() - 2]) starts.pop_back();
    }
    std::vector<WindowSpan> out;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        WindowSpan w;
        w.start_s = starts[i];
        w.begin_frame = std::min<std::size_t>(static_cast<std::size_t>(std::llround(starts[i] * frame_rate)), n_frames);
        w.end_frame = i + 1 == starts.size()
                          ? n_frames
                          : std::min<std::size_t>(
                                static_cast<std::size_t>(std::llround((starts[i] + window_s) * frame_rate)), n_frames);
        out.push_back(w);
    }
    return out;
}

/// Arithmetic mean of per-window probabilities over the windows covering
/// each frame. Each window's probs are [speaker][frame within window].
inline FrameProbabilities combine_windows(const std::vector<FrameProbabilities>& windows,
                                          const std::vector<WindowSpan>& layout, std::size_t n_frames) {
    require(windows.size() == layout.size() && !windows.empty(), "one probability block per window required");
    FrameProbabilities out;
    out.speakers = windows.front().speakers;
    out.frame_rate = windows.front().frame_rate;
    out.frames = n_frames;
    out.probs.assign(out.speakers.size(), std::vector<double>(n_frames, 0.0));
    out.coverage.assign(n_frames, 0);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& span = layout[w];
        require(windows[w].speakers == out.speakers, "windows disagree on the speaker list");
        require(windows[w].frames == span.end_frame - span.begin_frame, "window block length differs from layout");
        for (std::size_t t = span.begin_frame; t < span.end_frame; ++t) {
            ++out.coverage[t];
            for (std::size_t s = 0; s < out.speakers.size(); ++s)
                out.probs[s][t] += windows[w].probs[s][t - span.begin_frame];
        }
    }
    for (std::size_t t = 0; t < n_frames; ++t) {
        if (out.coverage[t] == 0)
            throw std::logic_error("window layout leaves frame " + std::to_string(t) + " uncovered");
        for (auto& row : out.probs) row[t] /= static_cast<double>(out.coverage[t]);
    }
    return out;
}

/// Running median of a 0/1 sequence; the window shrinks at the edges.
inline std::vector<bool> median_filter(const std::vector<bool>& x, std::size_t width) {
    const std::size_t half = width / 2;
    std::vector<bool> out(x.size());
    std::vector<std::size_t> prefix(x.size() + 1, 0);
    for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + (x[i] ? 1 : 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size(), i + half + 1);
        out[i] = 2 * (prefix[hi] - prefix[lo]) > hi - lo;
    }
    return out;
}

/// Thresholds, median-filters and converts runs to segments (frame t covers
/// [(t - 0.5)/rate, (t + 0.5)/rate)), then merges same-speaker gaps shorter
/// than min_gap_s and drops segments shorter than min_segment_s.
inline SegmentList probabilities_to_segments(const FrameProbabilities& probs, const RectifyConfig& cfg,
                                             const std::string& session = "session") {
    require(cfg.median_frames % 2 == 1, "median_frames must be odd");
    SegmentList out;
    const double fr = probs.frame_rate;
    for (std::size_t s = 0; s < probs.speakers.size(); ++s) {
        std::vector<bool> on(probs.frames);
        for (std::size_t t = 0; t < probs.frames; ++t) on[t] = probs.probs[s][t] > cfg.threshold;
        if (cfg.median_frames > 1) on = median_filter(on, cfg.median_frames);

        std::vector<std::pair<double, double>> runs;
        for (std::size_t t = 0; t < probs.frames;) {
            if (!on[t]) {
                ++t;
                continue;
            }
            std::size_t e = t;
            while (e < probs.frames && on[e]) ++e;
            const double a = std::max(0.0, (static_cast<double>(t) - 0.5) / fr);
            const double b = (static_cast<double>(e) - 0.5) / fr;
            runs.emplace_back(a, b);
            t = e;
        }
        std::vector<std::pair<double, double>> merged;
        for (const auto& r : runs) {
            if (!merged.empty() && r.first - merged.back().second < cfg.min_gap_s)
                merged.back().second = r.second;
            else
                merged.push_back(r);
        }
        for (const auto& [a, b] : merged)
            if (b - a >= cfg.min_segment_s && b > a) out.entries.push_back({session, probs.speakers[s], a, b - a});
    }
    out.sort();
    return out;
}

namespace detail {

inline FrameProbabilities window_probabilities(const StftTensor& window, const SegmentList& init,
                                               const std::vector<std::string>& speakers, double offset_s,
                                               const RectifyConfig& cfg) {
    const auto act =
        segments_to_activity(init, window.frame_rate(), window.frames, speakers, offset_s).floored(cfg.activity_floor);
    const auto em = cacgmm_em(window, act, cfg.em_iterations);
    FrameProbabilities p;
    p.speakers = speakers;
    p.frame_rate = window.frame_rate();
    p.frames = window.frames;
    for (std::size_t s = 0; s < speakers.size(); ++s) p.probs.push_back(em.masks.frame_mean(s));
    p.coverage.assign(window.frames, 1);
    return p;
}

}  // namespace detail

struct RectifyResult {
    SegmentList segments;
    FrameProbabilities probabilities;
};

/// Sliding-window cACGMM rectification of an initial diarization.
inline RectifyResult rectify(const MultichannelWave& wave, const SegmentList& init, const RectifyConfig& cfg = {}) {
    cfg.validate();
    wave.validate();
    require(!init.empty(), "rectify needs a non-empty initial segmentation");
    require(wave.num_channels() >= 2, "need >= 2 channels");
    init.validate();

    const auto speakers = init.speakers();
    const std::string session = init.session();
    const StftTensor full = stft(wave, cfg.stft);
    const double fr = full.frame_rate();
    const auto layout = window_layout(wave.duration_s(), full.frames, fr, cfg.window_s, cfg.shift_s);

    std::vector<FrameProbabilities> blocks;
    for (const auto& span : layout) {
        const StftTensor window = full.slice_frames(span.begin_frame, span.end_frame);
        blocks.push_back(
            detail::window_probabilities(window, init, speakers, frame_center_s(span.begin_frame, fr), cfg));
    }
    RectifyResult out;
    out.probabilities = combine_windows(blocks, layout, full.frames);
    out.segments = probabilities_to_segments(out.probabilities, cfg, session);
    return out;
}

/// Writes probabilities as row-major float32 [speaker][frame] plus a JSON
/// sidecar {speakers, frame_rate, n_frames} at `path + ".json"`.
inline void save_frame_probabilities(const FrameProbabilities& p, const std::string& path) {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& row : p.probs)
        for (double v : row) {
            const float f = static_cast<float>(v);
            char b[4];
            std::memcpy(b, &f, 4);
            bin.write(b, 4);
        }
    if (!bin) throw IoError("write to '" + path + "' failed");
    nlohmann::ordered_json j;
    j["speakers"] = p.speakers;
    j["frame_rate"] = p.frame_rate;
    j["n_frames"] = p.frames;
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw IoError("cannot open '" + path + ".json' for writing");
    side << j.dump(2) << "\n";
}

}  // namespace farfield
