#pragma once

// Simulated scenes shared by the unit and acceptance suites.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "farfield/farfield.hpp"

namespace scenes {

/// Four mics on a 5 cm circle at the origin.
inline std::vector<farfield::Vec3> circle4(double radius = 0.05) {
    std::vector<farfield::Vec3> m;
    for (int k = 0; k < 4; ++k) {
        const double a = k * std::numbers::pi / 2.0;
        m.push_back({radius * std::cos(a), radius * std::sin(a), 0.0});
    }
    return m;
}

/// Two speech-like talkers ("A", "B") at roughly equal distance from the
/// array, so the mixture is near 0 dB at every mic.
inline farfield::SceneSpec two_talkers(double duration, const farfield::SegmentList& schedule, std::uint64_t seed,
                                       std::optional<double> noise_db = -40.0, bool reverb = false) {
    farfield::SceneSpec s;
    s.session = "S";
    s.duration_s = duration;
    s.seed = seed;
    s.mics = circle4();
    s.sources.push_back({"A", {1.5, 0.3, 0.2}, farfield::SourceKind::speech, 0.0});
    s.sources.push_back({"B", {-0.4, 1.4, 0.1}, farfield::SourceKind::speech, 0.0});
    s.schedule = schedule;
    s.noise_db = noise_db;
    s.room.reverberant = reverb;
    return s;
}

/// Turn-taking conversation between "A" and "B" on the 4-mic circle.
inline farfield::SceneSpec conversation(double duration, std::uint64_t seed, std::optional<double> noise_db = -30.0) {
    return two_talkers(duration, farfield::random_conversation({"A", "B"}, duration, seed, "S"), seed, noise_db);
}

/// Exchanges the labels of speakers a and b inside [from_s, to_s); segments
/// crossing the region are split at its edges.
inline farfield::SegmentList swap_labels(const farfield::SegmentList& in, double from_s, double to_s,
                                         const std::string& a = "A", const std::string& b = "B") {
    farfield::SegmentList out;
    for (const auto& s : in.entries) {
        const std::string other = s.speaker == a ? b : s.speaker == b ? a : s.speaker;
        auto piece = [&](double x, double y, const std::string& who) {
            if (y - x > 1e-9) out.entries.push_back({s.session, who, x, y - x});
        };
        piece(s.onset, std::min(s.end(), from_s), s.speaker);
        piece(std::max(s.onset, from_s), std::min(s.end(), to_s), other);
        piece(std::max(s.onset, to_s), s.end(), s.speaker);
    }
    out.sort();
    return out;
}

inline farfield::MultichannelWave sum(const farfield::MultichannelWave& a, const farfield::MultichannelWave& b) {
    farfield::MultichannelWave out = a;
    for (std::size_t c = 0; c < a.num_channels(); ++c)
        for (std::size_t n = 0; n < a.num_samples(); ++n) out.channels[c][n] += b.channels[c][n];
    return out;
}

inline std::vector<double> samples(const std::vector<double>& x, double from_s, double to_s, int rate) {
    const auto a = static_cast<std::size_t>(std::llround(from_s * rate));
    const auto b = std::min(x.size(), static_cast<std::size_t>(std::llround(to_s * rate)));
    return {x.begin() + static_cast<std::ptrdiff_t>(a), x.begin() + static_cast<std::ptrdiff_t>(b)};
}

inline double energy(const farfield::StftTensor& x) {
    double e = 0.0;
    for (const auto& v : x.values) e += std::norm(v);
    return e;
}

inline double channel_energy(const farfield::StftTensor& x, std::size_t c) {
    double e = 0.0;
    for (std::size_t t = 0; t < x.frames; ++t)
        for (std::size_t f = 0; f < x.bins; ++f) e += std::norm(x.at(c, t, f));
    return e;
}

/// Fraction of frames with exactly one active speaker whose
/// frequency-averaged mask picks that speaker.
inline double guided_frame_accuracy(const farfield::TfMaskSet& masks, const farfield::ActivityMatrix& truth) {
    const auto ma = masks.frame_mean(0), mb = masks.frame_mean(1);
    std::size_t ok = 0, total = 0;
    for (std::size_t t = 0; t < truth.frames; ++t) {
        const bool a = truth.values[0][t] > 0.0, b = truth.values[1][t] > 0.0;
        if (a == b) continue;
        ++total;
        if ((ma[t] > mb[t]) == a) ++ok;
    }
    return total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
}

}  // namespace scenes
