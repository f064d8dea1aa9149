#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "farfield/activity.hpp"
#include "farfield/beamforming.hpp"
#include "farfield/cacgmm.hpp"
#include "farfield/error.hpp"
#include "farfield/segments.hpp"
#include "farfield/stft.hpp"

namespace farfield {

struct GssOptions {
    double context_s = 15.0;
    std::size_t iterations = 20;
    BeamformerKind beamformer = BeamformerKind::mvdr;
    int reference = 0;
};

struct EnhancedSegment {
    Segment segment;
    MultichannelWave audio;
    std::size_t fallback_bins = 0;
};

namespace detail {

/// First frame whose center is at or after `time_s`.
inline std::size_t first_frame_at(double time_s, const StftTensor& x) {
    std::size_t t = static_cast<std::size_t>(
        std::clamp(std::floor(time_s * x.frame_rate()), 0.0, static_cast<double>(x.frames)));
    while (t > 0 && frame_center_s(t - 1, x.frame_rate()) >= time_s) --t;
    while (t < x.frames && frame_center_s(t, x.frame_rate()) < time_s) ++t;
    return t;
}

}  // namespace detail

/// Guided source separation of every segment of `target`: cACGMM masks from
/// a context window constrained by all speakers' activity, then a mask-driven
/// beamformer. Returns one enhanced mono clip per target segment, in time order.
inline std::vector<EnhancedSegment> gss_enhance_segments(const StftTensor& tensor, const SegmentList& segments,
                                                         const std::string& target, const GssOptions& opt = {}) {
    const auto speakers = segments.speakers();
    if (std::find(speakers.begin(), speakers.end(), target) == speakers.end()) {
        std::string known;
        for (const auto& s : speakers) known += (known.empty() ? "" : ", ") + s;
        throw ProcessingError("speaker '" + target + "' not in segments; known speakers: " +
                              (known.empty() ? "(none)" : known));
    }
    require(opt.context_s >= 0.0, "context must be non-negative");
    require(opt.reference >= 0 && static_cast<std::size_t>(opt.reference) < tensor.channels,
            "reference channel out of range");

    const double fr = tensor.frame_rate();
    const auto hop = tensor.config.hop;
    const std::size_t target_class = static_cast<std::size_t>(
        std::find(speakers.begin(), speakers.end(), target) - speakers.begin());

    // A frame whose window reaches into a segment already carries that
    // speaker; marking it inactive would push the speech into the noise
    // statistics. Widen every segment by half an analysis window.
    const double pad = 0.5 * static_cast<double>(tensor.config.window_length) / tensor.sample_rate;
    SegmentList widened;
    for (auto s : segments.entries) {
        const double begin = std::max(0.0, s.onset - pad);
        s.duration = s.end() + pad - begin;
        s.onset = begin;
        widened.add(s);
    }

    std::vector<EnhancedSegment> out;
    for (const auto& seg : segments.for_speaker(target).entries) {
        const std::size_t c0 = detail::first_frame_at(seg.onset - opt.context_s, tensor);
        std::size_t c1 = detail::first_frame_at(seg.end() + opt.context_s, tensor);
        c1 = std::max(c1, std::min(c0 + 2, tensor.frames));
        if (c1 <= c0) throw ProcessingError("segment lies outside the recording");

        const StftTensor crop = tensor.slice_frames(c0, c1);
        const auto activity = segments_to_activity(widened, fr, crop.frames, speakers, frame_center_s(c0, fr));
        const auto em = cacgmm_em(crop, activity, opt.iterations);
        const auto phi_t = estimate_covariance(crop, em.masks.class_mask(target_class));
        const auto phi_n = estimate_covariance(crop, em.masks.complement_mask(target_class));
        const auto w = beamformer_weights(opt.beamformer, phi_t, phi_n, opt.reference);
        const auto wave = istft(apply_beamformer(crop, w));

        // crop sample 0 sits at global sample c0 * hop
        const double base = static_cast<double>(c0 * hop);
        const auto s0 = static_cast<std::size_t>(
            std::clamp(std::llround(seg.onset * tensor.sample_rate - base), 0LL, static_cast<long long>(wave.num_samples())));
        const auto s1 = static_cast<std::size_t>(
            std::clamp(std::llround(seg.end() * tensor.sample_rate - base), static_cast<long long>(s0),
                       static_cast<long long>(wave.num_samples())));
        out.push_back({seg, wave.slice(s0, s1), w.fallback_bins});
    }
    return out;
}

/// Enhanced target audio: the per-segment clips concatenated in time order,
/// with any part of a segment already covered by the previous one dropped.
inline MultichannelWave gss_enhance(const StftTensor& tensor, const SegmentList& segments, const std::string& target,
                                    const GssOptions& opt = {}) {
    const auto parts = gss_enhance_segments(tensor, segments, target, opt);
    MultichannelWave out = MultichannelWave::mono(tensor.sample_rate, {});
    double covered_until = -1.0;
    for (const auto& p : parts) {
        std::size_t skip = 0;
        if (p.segment.onset < covered_until)
            skip = static_cast<std::size_t>(std::llround((covered_until - p.segment.onset) * tensor.sample_rate));
        const auto& ch = p.audio.channels.front();
        if (skip < ch.size())
            out.channels.front().insert(out.channels.front().end(), ch.begin() + static_cast<std::ptrdiff_t>(skip),
                                        ch.end());
        covered_until = std::max(covered_until, p.segment.end());
    }
    return out;
}

}  // namespace farfield
