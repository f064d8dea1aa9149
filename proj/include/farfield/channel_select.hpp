#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "farfield/activity.hpp"
#include "farfield/beamforming.hpp"
#include "farfield/error.hpp"
#include "farfield/parallel.hpp"
#include "farfield/stft.hpp"

namespace farfield {

struct ChannelRanking {
    /// Channel indices, best first.
    std::vector<int> order;
    /// Envelope-variance score per channel, in channel order.
    std::vector<double> scores;
    /// Channels with zero energy; they score 0.
    std::vector<bool> silent;

    std::size_t rank_of(int channel) const {
        return static_cast<std::size_t>(std::find(order.begin(), order.end(), channel) - order.begin());
    }
};

struct SubarrayPlan {
    std::size_t group_size = 5;
    /// Consecutive runs of the EV ranking.
    std::vector<std::vector<int>> subarrays;
    /// Average SINR per subarray; empty until scored.
    std::vector<double> sinr_db;
    /// Subarray indices by SINR, best first; empty until scored.
    std::vector<int> order;

    bool scored() const { return !sinr_db.empty(); }
};

enum class SelectionPolicy { single_subarray, front_half_subarrays, ev_top_80pct };

inline std::string to_string(SelectionPolicy p) {
    switch (p) {
        case SelectionPolicy::single_subarray: return "single";
        case SelectionPolicy::front_half_subarrays: return "front50";
        case SelectionPolicy::ev_top_80pct: return "ev80";
    }
    return "?";
}

inline SelectionPolicy policy_from_string(const std::string& s) {
    if (s == "single") return SelectionPolicy::single_subarray;
    if (s == "front50") return SelectionPolicy::front_half_subarrays;
    if (s == "ev80") return SelectionPolicy::ev_top_80pct;
    throw PreconditionError("unknown selection policy '" + s + "' (expected single, front50 or ev80)");
}

inline constexpr std::size_t kEvBands = 20;
inline constexpr double kSinrClampDb = 60.0;

/// Triangular mel filters spanning 0 Hz to Nyquist, [band][bin].
inline std::vector<std::vector<double>> mel_filterbank(std::size_t bands, std::size_t bins, int sample_rate) {
    auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
    auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double nyquist = sample_rate / 2.0;
    std::vector<double> edges(bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = hz(mel(nyquist) * static_cast<double>(i) / static_cast<double>(bands + 1));
    std::vector<std::vector<double>> fb(bands, std::vector<double>(bins, 0.0));
    for (std::size_t b = 0; b < bands; ++b) {
        const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
        for (std::size_t f = 0; f < bins; ++f) {
            const double freq = nyquist * static_cast<double>(f) / static_cast<double>(bins - 1);
            if (freq > lo && freq < hi) fb[b][f] = freq <= mid ? (freq - lo) / (mid - lo) : (hi - freq) / (hi - mid);
        }
        // bands narrower than one bin still get their nearest bin
        if (std::all_of(fb[b].begin(), fb[b].end(), [](double v) { return v == 0.0; })) {
            const auto f = static_cast<std::size_t>(std::lround(mid / nyquist * static_cast<double>(bins - 1)));
            fb[b][std::min(f, bins - 1)] = 1.0;
        }
    }
    return fb;
}

/// Envelope-variance channel ranking. Per channel and mel band, the
/// cube-root compressed band energy is normalized by its temporal mean and
/// its temporal variance taken; variances are normalized per band by the
/// maximum across channels and summed. Higher means closer and cleaner.
inline ChannelRanking ev_scores(const StftTensor& tensor) {
    require(tensor.channels >= 2, "need >= 2 channels");
    require(tensor.frames >= 50, "envelope variance needs at least 50 frames");
    const std::size_t C = tensor.channels, T = tensor.frames, F = tensor.bins;
    const auto fb = mel_filterbank(kEvBands, F, tensor.sample_rate);

    std::vector<std::vector<double>> variance(C, std::vector<double>(kEvBands, 0.0));
    std::vector<char> silent(C, 0);
    parallel_for(C, [&](std::size_t c) {
        std::vector<std::vector<double>> env(kEvBands, std::vector<double>(T, 0.0));
        double total = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t b = 0; b < kEvBands; ++b) {
                double e = 0.0;
                for (std::size_t f = 0; f < F; ++f)
                    if (fb[b][f] > 0.0) e += fb[b][f] * std::norm(tensor.at(c, t, f));
                total += e;
                env[b][t] = std::cbrt(e);
            }
        }
        if (!(total > 0.0)) {
            silent[c] = 1;
            return;
        }
        for (std::size_t b = 0; b < kEvBands; ++b) {
            const double mean = std::accumulate(env[b].begin(), env[b].end(), 0.0) / static_cast<double>(T);
            if (!(mean > 0.0)) continue;
            double acc = 0.0;
            for (double v : env[b]) {
                const double d = v / mean - 1.0;
                acc += d * d;
            }
            variance[c][b] = acc / static_cast<double>(T);
        }
    });

    ChannelRanking r;
    r.scores.assign(C, 0.0);
    r.silent.assign(silent.begin(), silent.end());
    for (std::size_t b = 0; b < kEvBands; ++b) {
        double top = 0.0;
        for (std::size_t c = 0; c < C; ++c) top = std::max(top, variance[c][b]);
        if (!(top > 0.0)) continue;
        for (std::size_t c = 0; c < C; ++c) r.scores[c] += variance[c][b] / top;
    }
    r.order.resize(C);
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        return r.scores[static_cast<std::size_t>(a)] > r.scores[static_cast<std::size_t>(b)];
    });
    return r;
}

/// Splits the ranking into ceil(N/K) consecutive groups; the last group
/// holds the remainder. K > N gives a single group.
inline SubarrayPlan partition_subarrays(const ChannelRanking& ranking, std::size_t group_size = 5) {
    require(group_size >= 1, "subarray size must be >= 1");
    SubarrayPlan plan;
    plan.group_size = group_size;
    for (std::size_t i = 0; i < ranking.order.size(); i += group_size) {
        const std::size_t end = std::min(i + group_size, ranking.order.size());
        plan.subarrays.emplace_back(ranking.order.begin() + static_cast<std::ptrdiff_t>(i),
                                    ranking.order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

/// Frames where exactly the given speaker is active.
inline std::vector<bool> single_speaker_frames(const ActivityMatrix& act, std::size_t speaker) {
    std::vector<bool> on(act.frames, false);
    for (std::size_t t = 0; t < act.frames; ++t) {
        bool ok = act.values[speaker][t] > 0.5;
        for (std::size_t k = 0; ok && k < act.speakers.size(); ++k)
            if (k != speaker && act.values[k][t] > 0.5) ok = false;
        on[t] = ok;
    }
    return on;
}

inline std::vector<bool> no_speech_frames(const ActivityMatrix& act) {
    std::vector<bool> on(act.frames, true);
    for (std::size_t k = 0; k < act.speakers.size(); ++k)
        for (std::size_t t = 0; t < act.frames; ++t)
            if (act.values[k][t] > 0.5) on[t] = false;
    return on;
}

/// Average per-speaker SINR of an MVDR beamformer built for one subarray.
inline double subarray_sinr_db(const StftTensor& sub, const ActivityMatrix& act) {
    const auto noise_frames = no_speech_frames(act);
    const auto noise_mask = TfMask::from_frames(noise_frames, sub.bins);
    const auto phi_n = estimate_covariance(sub, noise_mask);
    double sum = 0.0;
    std::size_t speakers = 0;
    for (std::size_t s = 0; s < act.speakers.size(); ++s) {
        const auto target_frames = single_speaker_frames(act, s);
        if (std::none_of(target_frames.begin(), target_frames.end(), [](bool b) { return b; })) continue;
        const auto phi_t = estimate_covariance(sub, TfMask::from_frames(target_frames, sub.bins));
        const auto y = apply_beamformer(sub, mvdr_weights(phi_t, phi_n, 0));
        double ps = 0.0, pn = 0.0;
        std::size_t ns = 0, nn = 0;
        for (std::size_t t = 0; t < y.frames; ++t) {
            double p = 0.0;
            for (std::size_t f = 0; f < y.bins; ++f) p += std::norm(y.at(0, t, f));
            if (target_frames[t]) ps += p, ++ns;
            if (noise_frames[t]) pn += p, ++nn;
        }
        ps /= static_cast<double>(ns);
        pn /= static_cast<double>(nn);
        double db;
        if (pn > 0.0 && ps > 0.0)
            db = 10.0 * std::log10(ps / pn);
        else
            db = ps > 0.0 ? kSinrClampDb : -kSinrClampDb;
        sum += std::clamp(db, -kSinrClampDb, kSinrClampDb);
        ++speakers;
    }
    if (speakers == 0) throw ProcessingError("no frame with exactly one active speaker; cannot score subarrays");
    return sum / static_cast<double>(speakers);
}

/// Scores every subarray by the SINR of its MVDR output and orders them,
/// best first; ties keep EV order.
inline SubarrayPlan score_subarrays(SubarrayPlan plan, const StftTensor& tensor, const ActivityMatrix& activity) {
    activity.validate();
    require(activity.frames == tensor.frames, "activity does not cover the tensor's frames");
    const auto noise = no_speech_frames(activity);
    if (std::none_of(noise.begin(), noise.end(), [](bool b) { return b; }))
        throw ProcessingError("no speech-free frames in the annotation; supply a noise-floor annotation "
                              "(a region with no speaker) to score subarrays");
    plan.sinr_db.assign(plan.subarrays.size(), 0.0);
    for (std::size_t g = 0; g < plan.subarrays.size(); ++g)
        plan.sinr_db[g] = subarray_sinr_db(tensor.select_channels(plan.subarrays[g]), activity);
    plan.order.resize(plan.subarrays.size());
    std::iota(plan.order.begin(), plan.order.end(), 0);
    std::stable_sort(plan.order.begin(), plan.order.end(), [&](int a, int b) {
        return plan.sinr_db[static_cast<std::size_t>(a)] > plan.sinr_db[static_cast<std::size_t>(b)];
    });
    return plan;
}

/// Channel set chosen by the policy, sorted ascending.
inline std::vector<int> select_channels(const SubarrayPlan& plan, const ChannelRanking& ranking,
                                        SelectionPolicy policy) {
    std::vector<int> out;
    if (policy == SelectionPolicy::ev_top_80pct) {
        const std::size_t n = ranking.order.size();
        const std::size_t take = (4 * n + 4) / 5;  // ceil(0.8 n)
        out.assign(ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(take));
    } else {
        require(plan.scored(), "selection policy " + to_string(policy) + " needs a scored subarray plan");
        const std::size_t groups =
            policy == SelectionPolicy::single_subarray ? 1 : (plan.subarrays.size() + 1) / 2;
        for (std::size_t i = 0; i < groups; ++i) {
            const auto& g = plan.subarrays[static_cast<std::size_t>(plan.order[i])];
            out.insert(out.end(), g.begin(), g.end());
        }
    }
    require(!out.empty(), "selection is empty");
    std::sort(out.begin(), out.end());
    return out;
}

/// Highest-EV channel among the selection.
inline int best_ev_channel(const std::vector<int>& selection, const ChannelRanking& ranking) {
    for (int c : ranking.order)
        if (std::find(selection.begin(), selection.end(), c) != selection.end()) return c;
    throw PreconditionError("selection shares no channel with the ranking");
}

}  // namespace farfield
