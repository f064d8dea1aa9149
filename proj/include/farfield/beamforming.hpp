#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "farfield/error.hpp"
#include "farfield/parallel.hpp"
#include "farfield/stft.hpp"

namespace farfield {

/// Per-frame per-bin weights, laid out [frame][bin].
struct TfMask {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> values;

    TfMask() = default;
    TfMask(std::size_t t, std::size_t f, double fill = 0.0) : frames(t), bins(f), values(t * f, fill) {}

    double& at(std::size_t t, std::size_t f) { return values[t * bins + f]; }
    double at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }

    /// Mask that is `on` for every bin of the flagged frames.
    static TfMask from_frames(const std::vector<bool>& frame_on, std::size_t n_bins) {
        TfMask m(frame_on.size(), n_bins);
        for (std::size_t t = 0; t < frame_on.size(); ++t)
            if (frame_on[t]) std::fill_n(m.values.begin() + static_cast<std::ptrdiff_t>(t * n_bins), n_bins, 1.0);
        return m;
    }
};

/// Per-bin Hermitian PSD matrices with the mask mass that produced them.
struct SpatialCovariance {
    std::size_t channels = 0;
    std::vector<Eigen::MatrixXcd> matrices;
    std::vector<double> weight_mass;
    /// Bins that had no mask mass and were replaced by eps*I.
    std::vector<bool> degenerate;

    std::size_t bins() const { return matrices.size(); }
};

enum class BeamformerKind { mvdr, gevd };

inline std::string to_string(BeamformerKind k) { return k == BeamformerKind::mvdr ? "mvdr" : "gevd"; }

inline BeamformerKind beamformer_from_string(const std::string& s) {
    if (s == "mvdr") return BeamformerKind::mvdr;
    if (s == "gevd") return BeamformerKind::gevd;
    throw PreconditionError("unknown beamformer '" + s + "' (expected mvdr or gevd)");
}

struct BeamformerWeights {
    std::vector<Eigen::VectorXcd> weights;
    int reference = 0;
    BeamformerKind kind = BeamformerKind::mvdr;
    /// Bins whose solve failed and now pass the reference channel through.
    std::size_t fallback_bins = 0;
};

/// Loading added before every inverse or generalized eigenproblem.
inline constexpr double kDiagonalLoading = 1e-6;

inline Eigen::MatrixXcd diagonally_loaded(const Eigen::MatrixXcd& m) {
    const auto C = m.rows();
    const double load = kDiagonalLoading * m.trace().real() / static_cast<double>(C);
    return m + load * Eigen::MatrixXcd::Identity(C, C);
}

/// Phi_f = sum_t m(t,f) x x^H / sum_t m(t,f).
inline SpatialCovariance estimate_covariance(const StftTensor& tensor, const TfMask& mask) {
    require(mask.frames == tensor.frames && mask.bins == tensor.bins, "mask shape does not match tensor");
    const std::size_t C = tensor.channels, T = tensor.frames, F = tensor.bins;
    double mean_power = 0.0;
    for (const auto& v : tensor.values) mean_power += std::norm(v);
    mean_power = tensor.values.empty() ? 0.0 : mean_power / static_cast<double>(tensor.values.size());
    const double eps = mean_power > 0.0 ? 1e-10 * mean_power : 1e-10;

    SpatialCovariance out;
    out.channels = C;
    out.matrices.assign(F, Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C)));
    out.weight_mass.assign(F, 0.0);
    std::vector<char> degenerate(F, 0);
    parallel_for(F, [&](std::size_t f) {
        Eigen::MatrixXcd X(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(T));
        double mass = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double m = mask.at(t, f);
            mass += m;
            const double s = std::sqrt(std::max(m, 0.0));
            for (std::size_t c = 0; c < C; ++c)
                X(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = s * tensor.at(c, t, f);
        }
        auto& phi = out.matrices[f];
        if (mass > 0.0) {
            phi.noalias() = X * X.adjoint();
            phi /= mass;
            phi = (0.5 * (phi + phi.adjoint())).eval();
        } else {
            phi = eps * Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
            degenerate[f] = 1;
        }
        out.weight_mass[f] = mass;
    });
    out.degenerate.assign(degenerate.begin(), degenerate.end());
    return out;
}

namespace detail {

inline bool usable(const Eigen::VectorXcd& w) { return w.allFinite() && w.norm() > 0.0; }

inline Eigen::VectorXcd unit(Eigen::Index n, int ref) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
    e(ref) = 1.0;
    return e;
}

inline void check_pair(const SpatialCovariance& target, const SpatialCovariance& noise, int reference) {
    require(target.bins() == noise.bins() && target.channels == noise.channels,
            "target and noise covariances differ in shape");
    require(reference >= 0 && static_cast<std::size_t>(reference) < target.channels,
            "reference channel out of range");
}

}  // namespace detail

/// Reference-channel MVDR: w = (Phi_n^-1 Phi_t / tr(Phi_n^-1 Phi_t)) e_ref.
inline BeamformerWeights mvdr_weights(const SpatialCovariance& target, const SpatialCovariance& noise,
                                      int reference) {
    detail::check_pair(target, noise, reference);
    const auto C = static_cast<Eigen::Index>(target.channels);
    BeamformerWeights out;
    out.reference = reference;
    out.kind = BeamformerKind::mvdr;
    out.weights.resize(target.bins());
    std::vector<char> fell_back(target.bins(), 0);
    parallel_for(target.bins(), [&](std::size_t f) {
        const Eigen::MatrixXcd phi_n = diagonally_loaded(noise.matrices[f]);
        Eigen::LLT<Eigen::MatrixXcd> llt(phi_n);
        Eigen::VectorXcd w;
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXcd m = llt.solve(target.matrices[f]);
            w = m.col(reference) / m.trace();
        }
        if (w.size() != C || !detail::usable(w)) {
            w = detail::unit(C, reference);
            fell_back[f] = 1;
        }
        out.weights[f] = std::move(w);
    });
    for (char b : fell_back) out.fallback_bins += static_cast<std::size_t>(b);
    return out;
}

struct GeneralizedEigenpair {
    Eigen::VectorXcd vector;
    double value = 0.0;
    bool ok = false;
};

/// Principal eigenpair of A v = lambda B v for Hermitian A and Hermitian
/// positive definite B.
inline GeneralizedEigenpair principal_generalized_eigenvector(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> solver(a, b,
                                                                      Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    GeneralizedEigenpair out;
    if (solver.info() != Eigen::Success) return out;
    const auto n = a.rows();
    out.vector = solver.eigenvectors().col(n - 1);
    out.value = solver.eigenvalues()(n - 1);
    out.ok = detail::usable(out.vector) && std::isfinite(out.value);
    return out;
}

/// Max-SNR beamformer with blind analytic normalization; phase aligned so
/// that w^H e_ref is real and non-negative.
inline BeamformerWeights gevd_weights(const SpatialCovariance& target, const SpatialCovariance& noise,
                                      int reference) {
    detail::check_pair(target, noise, reference);
    const auto C = static_cast<Eigen::Index>(target.channels);
    BeamformerWeights out;
    out.reference = reference;
    out.kind = BeamformerKind::gevd;
    out.weights.resize(target.bins());
    std::vector<char> fell_back(target.bins(), 0);
    parallel_for(target.bins(), [&](std::size_t f) {
        const Eigen::MatrixXcd phi_n = diagonally_loaded(noise.matrices[f]);
        const auto pair = principal_generalized_eigenvector(target.matrices[f], phi_n);
        Eigen::VectorXcd w;
        if (pair.ok) {
            w = pair.vector;
            const double denom = (w.adjoint() * phi_n * w)(0, 0).real();
            const double numer = std::sqrt((w.adjoint() * phi_n * phi_n * w)(0, 0).real() / static_cast<double>(C));
            w *= numer / denom;
            const std::complex<double> r = w(reference);
            if (std::abs(r) > 0.0) w *= std::conj(r) / std::abs(r);
        }
        if (w.size() != C || !detail::usable(w)) {
            w = detail::unit(C, reference);
            fell_back[f] = 1;
        }
        out.weights[f] = std::move(w);
    });
    for (char b : fell_back) out.fallback_bins += static_cast<std::size_t>(b);
    return out;
}

inline BeamformerWeights beamformer_weights(BeamformerKind kind, const SpatialCovariance& target,
                                            const SpatialCovariance& noise, int reference) {
    return kind == BeamformerKind::mvdr ? mvdr_weights(target, noise, reference)
                                        : gevd_weights(target, noise, reference);
}

/// y(t,f) = w_f^H x(t,f).
inline StftTensor apply_beamformer(const StftTensor& tensor, const BeamformerWeights& weights) {
    require(weights.weights.size() == tensor.bins, "weights cover a different number of bins");
    for (const auto& w : weights.weights)
        require(static_cast<std::size_t>(w.size()) == tensor.channels, "weight length differs from channel count");
    StftTensor out(tensor.config, tensor.sample_rate, tensor.original_length, 1, tensor.frames);
    for (std::size_t t = 0; t < tensor.frames; ++t) {
        for (std::size_t f = 0; f < tensor.bins; ++f) {
            const auto& w = weights.weights[f];
            cdouble acc = 0.0;
            for (std::size_t c = 0; c < tensor.channels; ++c)
                acc += std::conj(w(static_cast<Eigen::Index>(c))) * tensor.at(c, t, f);
            out.at(0, t, f) = acc;
        }
    }
    return out;
}

}  // namespace farfield
