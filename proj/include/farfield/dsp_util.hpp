#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace farfield {

/// Linear convolution truncated to the length of `signal`, by FFT
/// overlap-add.
inline std::vector<double> fft_convolve(std::span<const double> signal, std::span<const double> kernel) {
    std::vector<double> out(signal.size(), 0.0);
    if (signal.empty() || kernel.empty()) return out;
    std::size_t block = 4096;
    while (block < kernel.size()) block <<= 1;
    std::size_t M = 1;
    while (M < block + kernel.size() - 1) M <<= 1;

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buf(M, 0.0), res(M);
    std::vector<std::complex<double>> H(M / 2 + 1), X(M / 2 + 1);
    std::copy(kernel.begin(), kernel.end(), buf.begin());
    fft.fwd(H.data(), buf.data(), static_cast<Eigen::Index>(M));
    for (std::size_t b = 0; b < signal.size(); b += block) {
        const std::size_t len = std::min(block, signal.size() - b);
        std::fill(buf.begin(), buf.end(), 0.0);
        std::copy_n(signal.begin() + static_cast<std::ptrdiff_t>(b), len, buf.begin());
        fft.fwd(X.data(), buf.data(), static_cast<Eigen::Index>(M));
        for (std::size_t k = 0; k < X.size(); ++k) X[k] *= H[k];
        fft.inv(res.data(), X.data(), static_cast<Eigen::Index>(M));
        const std::size_t n = std::min(M, signal.size() - b);
        for (std::size_t i = 0; i < n; ++i) out[b + i] += res[i];
    }
    return out;
}

/// Delays a signal by a possibly fractional number of samples with a
/// Hann-windowed sinc interpolator; the output keeps the input length.
inline std::vector<double> fractional_delay(std::span<const double> x, double delay, std::size_t half_taps = 32) {
    std::vector<double> out(x.size(), 0.0);
    const double whole = std::floor(delay);
    const double frac = delay - whole;
    const auto shift = static_cast<long>(whole);
    if (frac == 0.0) {
        for (std::size_t n = 0; n < x.size(); ++n) {
            const long src = static_cast<long>(n) - shift;
            if (src >= 0 && src < static_cast<long>(x.size())) out[n] = x[static_cast<std::size_t>(src)];
        }
        return out;
    }
    // h[j] for j in [-half+1, half]: out[n] = sum_j h[j] x[n - shift - j]
    const auto H = static_cast<long>(half_taps);
    std::vector<double> h;
    for (long j = -H + 1; j <= H; ++j) {
        const double u = static_cast<double>(j) - frac;
        const double sinc = std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
        const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * u / static_cast<double>(H));
        h.push_back(sinc * win);
    }
    const auto N = static_cast<long>(x.size());
    for (long n = 0; n < N; ++n) {
        double acc = 0.0;
        for (long j = -H + 1; j <= H; ++j) {
            const long src = n - shift - j;
            if (src >= 0 && src < N) acc += h[static_cast<std::size_t>(j + H - 1)] * x[static_cast<std::size_t>(src)];
        }
        out[static_cast<std::size_t>(n)] = acc;
    }
    return out;
}

}  // namespace farfield
