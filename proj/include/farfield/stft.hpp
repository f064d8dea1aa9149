#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "farfield/error.hpp"
#include "farfield/parallel.hpp"
#include "farfield/wave.hpp"

namespace farfield {

using cdouble = std::complex<double>;

/// Taper applied at both analysis and synthesis.
enum class WindowKind { sqrt_hann, hann, rect };

inline std::string to_string(WindowKind k) {
    switch (k) {
        case WindowKind::sqrt_hann: return "sqrt_hann";
        case WindowKind::hann: return "hann";
        case WindowKind::rect: return "rect";
    }
    return "?";
}

inline WindowKind window_from_string(const std::string& s) {
    if (s == "sqrt_hann") return WindowKind::sqrt_hann;
    if (s == "hann") return WindowKind::hann;
    if (s == "rect") return WindowKind::rect;
    throw PreconditionError("unknown window '" + s + "'");
}

/// Periodic taper of the given length.
inline std::vector<double> make_window(WindowKind kind, std::size_t length) {
    std::vector<double> w(length, 1.0);
    if (kind == WindowKind::rect) return w;
    for (std::size_t n = 0; n < length; ++n) {
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
        w[n] = kind == WindowKind::hann ? hann : std::sqrt(hann);
    }
    return w;
}

struct StftConfig {
    std::size_t window_length = 1024;
    std::size_t hop = 256;
    std::size_t fft_size = 1024;
    WindowKind window = WindowKind::sqrt_hann;

    std::size_t bins() const { return fft_size / 2 + 1; }

    /// Checks framing bounds and the constant-overlap-add condition of the
    /// analysis*synthesis product within 1e-6 relative deviation.
    void validate() const {
        require(hop > 0 && hop <= window_length && window_length <= fft_size,
                "stft config needs 0 < hop <= window_length <= fft_size");
        require(fft_size % 2 == 0, "fft_size must be even");
        require(window_length % 2 == 0, "window_length must be even");
        const auto w = make_window(window, window_length);
        double lo = INFINITY, hi = 0.0;
        for (std::size_t n = 0; n < hop; ++n) {
            double s = 0.0;
            for (std::size_t k = n; k < window_length; k += hop) s += w[k] * w[k];
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        require(lo > 0.0 && (hi - lo) <= 1e-6 * hi,
                "window " + to_string(window) + " with hop " + std::to_string(hop) +
                    " violates constant overlap-add");
    }

    bool operator==(const StftConfig&) const = default;
};

/// Complex spectrogram, values laid out [channel][frame][bin].
struct StftTensor {
    StftConfig config;
    int sample_rate = 16000;
    std::size_t original_length = 0;
    std::size_t channels = 0;
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<cdouble> values;

    StftTensor() = default;
    StftTensor(const StftConfig& cfg, int rate, std::size_t length, std::size_t n_channels, std::size_t n_frames)
        : config(cfg), sample_rate(rate), original_length(length), channels(n_channels), frames(n_frames),
          bins(cfg.bins()), values(n_channels * n_frames * cfg.bins()) {}

    cdouble& at(std::size_t c, std::size_t t, std::size_t f) { return values[(c * frames + t) * bins + f]; }
    const cdouble& at(std::size_t c, std::size_t t, std::size_t f) const {
        return values[(c * frames + t) * bins + f];
    }

    double frame_rate() const { return static_cast<double>(sample_rate) / config.hop; }

    /// Time in seconds at the center of frame t.
    double frame_time(std::size_t t) const { return static_cast<double>(t * config.hop) / sample_rate; }

    StftTensor select_channels(const std::vector<int>& idx) const {
        StftTensor out(config, sample_rate, original_length, idx.size(), frames);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < channels, "channel index out of range");
            const auto src = values.begin() + static_cast<std::ptrdiff_t>(idx[i] * frames * bins);
            std::copy(src, src + static_cast<std::ptrdiff_t>(frames * bins),
                      out.values.begin() + static_cast<std::ptrdiff_t>(i * frames * bins));
        }
        return out;
    }

    /// Frames [begin, end). The slice is its own signal of length
    /// (end - begin - 1) * hop, so istft accepts it.
    StftTensor slice_frames(std::size_t begin, std::size_t end) const {
        require(begin < end && end <= frames, "frame slice out of range");
        const std::size_t n = end - begin;
        StftTensor out(config, sample_rate, (n - 1) * config.hop, channels, n);
        for (std::size_t c = 0; c < channels; ++c)
            std::copy(&at(c, begin, 0), &at(c, begin, 0) + n * bins, &out.at(c, 0, 0));
        return out;
    }
};

/// Frame count for a signal of n samples under centered framing.
inline std::size_t stft_frame_count(std::size_t n_samples, std::size_t hop) { return 1 + n_samples / hop; }

namespace detail {

/// Index into a signal of length n under whole-sample symmetric
/// reflection, extended periodically for arbitrary offsets.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return m >= n ? period - m : m;
}

}  // namespace detail

/// Centered STFT: each channel is reflect-padded by window_length/2 at both
/// ends so that frame t is centered on sample t*hop.
inline StftTensor stft(const MultichannelWave& wave, const StftConfig& cfg) {
    cfg.validate();
    wave.validate();
    const std::size_t N = wave.num_samples();
    const std::size_t T = stft_frame_count(N, cfg.hop);
    StftTensor out(cfg, wave.sample_rate, N, wave.num_channels(), T);
    const auto window = make_window(cfg.window, cfg.window_length);
    const auto half = static_cast<std::ptrdiff_t>(cfg.window_length / 2);

    parallel_for(wave.num_channels(), [&](std::size_t c) {
        Eigen::FFT<double> fft;
        fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
        std::vector<double> frame(cfg.fft_size, 0.0);
        std::vector<cdouble> spec(cfg.bins());
        const auto& x = wave.channels[c];
        for (std::size_t t = 0; t < T; ++t) {
            const auto start = static_cast<std::ptrdiff_t>(t * cfg.hop) - half;
            for (std::size_t n = 0; n < cfg.window_length; ++n) {
                double v = 0.0;
                if (N > 0)
                    v = x[static_cast<std::size_t>(
                        detail::reflect_index(start + static_cast<std::ptrdiff_t>(n), static_cast<std::ptrdiff_t>(N)))];
                frame[n] = v * window[n];
            }
            fft.fwd(spec.data(), frame.data(), static_cast<Eigen::Index>(cfg.fft_size));
            std::copy(spec.begin(), spec.end(), &out.at(c, t, 0));
        }
    });
    return out;
}

/// Weighted overlap-add inverse; exact inverse of stft for any valid config.
inline MultichannelWave istft(const StftTensor& tensor) {
    const auto& cfg = tensor.config;
    cfg.validate();
    if (tensor.frames != stft_frame_count(tensor.original_length, cfg.hop) || tensor.bins != cfg.bins() ||
        tensor.values.size() != tensor.channels * tensor.frames * tensor.bins)
        throw PreconditionError("istft: tensor shape does not match its config and original length");

    const auto window = make_window(cfg.window, cfg.window_length);
    const std::size_t half = cfg.window_length / 2;
    const std::size_t padded = (tensor.frames - 1) * cfg.hop + cfg.window_length;

    std::vector<double> envelope(padded, 0.0);
    for (std::size_t t = 0; t < tensor.frames; ++t)
        for (std::size_t n = 0; n < cfg.window_length; ++n) envelope[t * cfg.hop + n] += window[n] * window[n];

    MultichannelWave out;
    out.sample_rate = tensor.sample_rate;
    out.channels.assign(tensor.channels, std::vector<double>(tensor.original_length, 0.0));
    parallel_for(tensor.channels, [&](std::size_t c) {
        Eigen::FFT<double> fft;
        fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
        std::vector<double> acc(padded, 0.0);
        std::vector<double> frame(cfg.fft_size);
        for (std::size_t t = 0; t < tensor.frames; ++t) {
            fft.inv(frame.data(), &tensor.at(c, t, 0), static_cast<Eigen::Index>(cfg.fft_size));
            for (std::size_t n = 0; n < cfg.window_length; ++n) acc[t * cfg.hop + n] += frame[n] * window[n];
        }
        auto& y = out.channels[c];
        for (std::size_t n = 0; n < tensor.original_length; ++n) {
            const double e = envelope[n + half];
            y[n] = e > 1e-12 ? acc[n + half] / e : 0.0;
        }
    });
    return out;
}

}  // namespace farfield
