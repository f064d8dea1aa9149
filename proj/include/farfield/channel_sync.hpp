#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "farfield/error.hpp"
#include "farfield/parallel.hpp"
#include "farfield/wave.hpp"

namespace farfield {

struct LagEstimate {
    int channel = 0;
    /// Positive when the channel is delayed relative to the reference.
    long lag = 0;
    /// Normalized correlation at the chosen lag, in [-1, 1].
    double peak_correlation = 0.0;
};

/// Cross-correlation r[l] = sum_n x[n] * y[n + l] for l in [-max_lag, max_lag],
/// returned at index l + max_lag. Computed block-wise with FFTs, so the cost
/// is O(N log max_lag) rather than O(N * max_lag).
inline std::vector<double> cross_correlation(std::span<const double> x, std::span<const double> y,
                                             std::size_t max_lag) {
    const std::size_t L = max_lag;
    const std::size_t block = std::max<std::size_t>(2 * L, 4096);
    std::size_t M = 1;
    while (M < block + 2 * L) M <<= 1;

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> xb(M), yb(M), prod(M);
    std::vector<std::complex<double>> X(M / 2 + 1), Y(M / 2 + 1);
    std::vector<double> r(2 * L + 1, 0.0);

    const auto ny = static_cast<std::ptrdiff_t>(y.size());
    for (std::size_t b = 0; b < x.size(); b += block) {
        const std::size_t len = std::min(block, x.size() - b);
        std::fill(xb.begin(), xb.end(), 0.0);
        std::fill(yb.begin(), yb.end(), 0.0);
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(b), x.begin() + static_cast<std::ptrdiff_t>(b + len),
                  xb.begin());
        const auto y0 = static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(L);
        for (std::size_t k = 0; k < len + 2 * L; ++k) {
            const std::ptrdiff_t idx = y0 + static_cast<std::ptrdiff_t>(k);
            if (idx >= 0 && idx < ny) yb[k] = y[static_cast<std::size_t>(idx)];
        }
        fft.fwd(X.data(), xb.data(), static_cast<Eigen::Index>(M));
        fft.fwd(Y.data(), yb.data(), static_cast<Eigen::Index>(M));
        for (std::size_t k = 0; k < X.size(); ++k) X[k] = std::conj(X[k]) * Y[k];
        fft.inv(prod.data(), X.data(), static_cast<Eigen::Index>(M));
        for (std::size_t k = 0; k <= 2 * L; ++k) r[k] += prod[k];
    }
    return r;
}

/// Integer lag of y relative to x maximizing the normalized cross-correlation
/// within [-max_lag, max_lag]. Ties go to the smaller |lag|, then to the
/// negative lag.
inline LagEstimate estimate_lag(std::span<const double> x, std::span<const double> y, std::size_t max_lag) {
    require(max_lag < std::min(x.size(), y.size()), "max_lag must be shorter than both signals");
    double ex = 0.0, ey = 0.0;
    for (double v : x) ex += v * v;
    for (double v : y) ey += v * v;
    if (!(ex > 0.0) || !(ey > 0.0)) throw ProcessingError("correlation undefined for a silent signal");

    const auto r = cross_correlation(x, y, max_lag);
    const double norm = std::sqrt(ex * ey);
    const double tol = 1e-12 * norm;
    const auto L = static_cast<long>(max_lag);
    long best = 0;
    double best_r = r[max_lag];
    for (long m = 1; m <= L; ++m) {
        for (long l : {-m, m}) {
            const double v = r[static_cast<std::size_t>(l + L)];
            if (v > best_r + tol) {
                best_r = v;
                best = l;
            }
        }
    }
    return {0, best, std::clamp(best_r / norm, -1.0, 1.0)};
}

struct SyncResult {
    MultichannelWave wave;
    std::vector<LagEstimate> lags;
};

/// Shifts every channel by minus its lag against the reference channel so
/// that all channels line up. Channels keep the common length; vacated
/// samples are zero.
inline SyncResult synchronize(const MultichannelWave& wave, std::size_t reference, std::size_t max_lag) {
    wave.validate();
    require(reference < wave.num_channels(), "reference channel " + std::to_string(reference) +
                                                 " out of range for " + std::to_string(wave.num_channels()) +
                                                 " channels");
    const std::size_t C = wave.num_channels();
    const std::size_t N = wave.num_samples();
    std::vector<LagEstimate> lags(C);
    std::vector<std::string> failures(C);
    parallel_for(C, [&](std::size_t c) {
        try {
            lags[c] = c == reference ? LagEstimate{0, 0, 1.0}
                                     : estimate_lag(wave.channels[reference], wave.channels[c], max_lag);
            lags[c].channel = static_cast<int>(c);
        } catch (const Error& e) {
            failures[c] = e.what();
        }
    });
    for (std::size_t c = 0; c < C; ++c)
        if (!failures[c].empty()) throw ProcessingError("channel " + std::to_string(c) + ": " + failures[c]);

    SyncResult out;
    out.lags = lags;
    out.wave.sample_rate = wave.sample_rate;
    out.wave.channels.assign(C, std::vector<double>(N, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
        const long lag = lags[c].lag;
        for (std::size_t n = 0; n < N; ++n) {
            const long src = static_cast<long>(n) + lag;
            if (src >= 0 && src < static_cast<long>(N)) out.wave.channels[c][n] = wave.channels[c][static_cast<std::size_t>(src)];
        }
    }
    return out;
}

}  // namespace farfield
