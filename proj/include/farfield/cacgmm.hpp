#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "farfield/activity.hpp"
#include "farfield/beamforming.hpp"
#include "farfield/error.hpp"
#include "farfield/parallel.hpp"
#include "farfield/stft.hpp"

namespace farfield {

/// Per-class time-frequency posteriors, laid out [class][frame][bin].
struct TfMaskSet {
    std::size_t classes = 0;
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> gamma;

    double& at(std::size_t k, std::size_t t, std::size_t f) { return gamma[(k * frames + t) * bins + f]; }
    double at(std::size_t k, std::size_t t, std::size_t f) const { return gamma[(k * frames + t) * bins + f]; }

    TfMask class_mask(std::size_t k) const {
        TfMask m(frames, bins);
        std::copy_n(gamma.begin() + static_cast<std::ptrdiff_t>(k * frames * bins), frames * bins, m.values.begin());
        return m;
    }

    /// Sum of the masks of every class except `k`.
    TfMask complement_mask(std::size_t k) const {
        TfMask m(frames, bins);
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == k) continue;
            for (std::size_t i = 0; i < frames * bins; ++i) m.values[i] += gamma[j * frames * bins + i];
        }
        return m;
    }

    /// Mean of class k's posterior over bins, one value per frame.
    std::vector<double> frame_mean(std::size_t k) const {
        std::vector<double> out(frames, 0.0);
        for (std::size_t t = 0; t < frames; ++t) {
            double s = 0.0;
            for (std::size_t f = 0; f < bins; ++f) s += at(k, t, f);
            out[t] = s / static_cast<double>(bins);
        }
        return out;
    }
};

struct CacgmmParams {
    std::size_t classes = 0;
    std::size_t bins = 0;
    std::size_t channels = 0;
    /// Mixture weights, [bin][class].
    std::vector<double> pi;
    /// Trace-normalized shape matrices, [bin][class].
    std::vector<Eigen::MatrixXcd> shape;

    double weight(std::size_t f, std::size_t k) const { return pi[f * classes + k]; }
    const Eigen::MatrixXcd& matrix(std::size_t f, std::size_t k) const { return shape[f * classes + k]; }
};

struct CacgmmResult {
    TfMaskSet masks;
    CacgmmParams params;
    /// Total log-likelihood after each iteration.
    std::vector<double> loglik;
    /// (frame, bin) observations with zero energy, excluded from the statistics.
    std::size_t excluded_observations = 0;
};

namespace detail {

struct BinFit {
    std::vector<double> pi;
    std::vector<Eigen::MatrixXcd> shape;
    std::vector<double> loglik;
    std::size_t excluded = 0;
};

inline double log_factorial(std::size_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// Largest eigenvalue spread allowed in a shape matrix.
inline constexpr double kMaxShapeCondition = 1e6;

/// Maximizer of sum_i (-log v_i - l_i / v_i) subject to max v / min v <= kappa:
/// every l_i is clipped to [u, kappa u], where u is the root of
///   N(u) = sum_{l_i < u} (l_i - u) + sum_{l_i > kappa u} (l_i / kappa - u),
/// which is continuous, piecewise linear and decreasing.
inline Eigen::VectorXd clip_condition(Eigen::VectorXd l, double kappa) {
    l = l.cwiseMax(0.0);
    const double hi = l.maxCoeff(), lo = l.minCoeff();
    if (lo > 0.0 && hi <= kappa * lo) return l;
    std::vector<double> knots{lo, hi / kappa};
    for (double v : l) {
        if (v > lo && v < hi / kappa) knots.push_back(v);
        if (v / kappa > lo && v / kappa < hi / kappa) knots.push_back(v / kappa);
    }
    std::sort(knots.begin(), knots.end());
    double u = hi / kappa;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
        const double a = knots[j], b = knots[j + 1];
        if (!(b > a)) continue;
        const double mid = 0.5 * (a + b);
        double num = 0.0, cnt = 0.0;
        for (double v : l) {
            if (v < mid) num += v, cnt += 1.0;
            else if (v > kappa * mid) num += v / kappa, cnt += 1.0;
        }
        const double root = num / cnt;
        if (root >= a && root <= b) {
            u = root;
            break;
        }
    }
    u = std::max(u, std::numeric_limits<double>::min());
    for (double& v : l) v = std::clamp(v, u, kappa * u);
    return l;
}

/// EM for one frequency bin. gamma is written into masks.at(k, t, f).
///
/// Each unit-norm observation z is represented by the D*D real terms of
/// z z^H (|z_a|^2, then Re and Im of conj(z_a) z_b for a < b). Quadratic
/// forms z^H P z and the weighted scatter sum_i w_i z_i z_i^H then become
/// plain real matrix products against that feature matrix.
inline BinFit fit_bin(const StftTensor& x, const ActivityMatrix& act, std::size_t f, std::size_t iterations,
                      double silence_power, TfMaskSet& masks) {
    const std::size_t T = x.frames, K = act.classes();
    const std::size_t D = x.channels;
    const auto Di = static_cast<Eigen::Index>(D);
    const double Dd = static_cast<double>(D);
    const auto Ki = static_cast<Eigen::Index>(K);
    const auto P = static_cast<Eigen::Index>(D * D);

    std::vector<std::size_t> frames;
    frames.reserve(T);
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(T), P);
    std::vector<cdouble> z(D);
    for (std::size_t t = 0; t < T; ++t) {
        double p = 0.0;
        for (std::size_t c = 0; c < D; ++c) p += std::norm(x.at(c, t, f));
        if (!(p > silence_power)) continue;
        const double inv = 1.0 / std::sqrt(p);
        for (std::size_t c = 0; c < D; ++c) z[c] = x.at(c, t, f) * inv;
        const auto row = static_cast<Eigen::Index>(frames.size());
        Eigen::Index col = 0;
        for (std::size_t a = 0; a < D; ++a) phi(row, col++) = std::norm(z[a]);
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = a + 1; b < D; ++b) {
                const cdouble u = std::conj(z[a]) * z[b];
                phi(row, col++) = u.real();
                phi(row, col++) = u.imag();
            }
        frames.push_back(t);
    }
    const auto n = static_cast<Eigen::Index>(frames.size());
    phi.conservativeResize(n, P);

    BinFit fit;
    fit.excluded = T - frames.size();
    fit.pi.assign(K, 0.0);
    fit.shape.assign(K, Eigen::MatrixXcd::Identity(Di, Di));

    // gamma and activity as [observation][class]
    Eigen::MatrixXd gamma(n, Ki), actv(n, Ki);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t t = frames[static_cast<std::size_t>(i)];
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += act.values[k][t];
        for (std::size_t k = 0; k < K; ++k) {
            actv(i, static_cast<Eigen::Index>(k)) = act.values[k][t];
            gamma(i, static_cast<Eigen::Index>(k)) = act.values[k][t] / s;
        }
    }

    // z^H B^-1 z under the current shapes; B = I initially and |z| = 1
    Eigen::MatrixXd quad = Eigen::MatrixXd::Ones(n, Ki);
    const double log_norm = log_factorial(D - 1) - std::log(2.0) - Dd * std::log(std::numbers::pi);
    Eigen::MatrixXd weights(n, Ki), scatter(P, Ki), coeff(P, Ki);
    std::vector<double> logdet(K), logpi(K);

    for (std::size_t it = 0; it < iterations; ++it) {
        // M-step
        weights = gamma.cwiseQuotient(quad);
        scatter.noalias() = phi.transpose() * weights;
        for (std::size_t k = 0; k < K; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double mass = n > 0 ? gamma.col(kk).sum() : 0.0;
            fit.pi[k] = n > 0 ? mass / static_cast<double>(n) : 0.0;
            Eigen::MatrixXcd S = fit.shape[k];
            if (mass > 0.0) {
                Eigen::Index col = 0;
                for (Eigen::Index a = 0; a < Di; ++a) S(a, a) = scatter(col++, kk);
                for (Eigen::Index a = 0; a < Di; ++a)
                    for (Eigen::Index b = a + 1; b < Di; ++b) {
                        S(a, b) = cdouble(scatter(col, kk), -scatter(col + 1, kk));
                        S(b, a) = std::conj(S(a, b));
                        col += 2;
                    }
            }
            // The fixed-point update D * sum w z z^H / mass maximizes a lower
            // bound of the likelihood. Maximizing that bound over the cone of
            // condition number <= kappa instead keeps EM monotone when a class
            // sees too few frames to span all channels. Scale is free (trace
            // is normalized right after), so the 1/mass factor is dropped.
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(S);
            Eigen::VectorXd lam = clip_condition(es.eigenvalues(), kMaxShapeCondition);
            lam *= Dd / lam.sum();
            const Eigen::MatrixXcd& V = es.eigenvectors();
            fit.shape[k] = V * lam.cast<cdouble>().asDiagonal() * V.adjoint();
            logdet[k] = lam.array().log().sum();
            logpi[k] = fit.pi[k] > 0.0 ? std::log(fit.pi[k]) : -std::numeric_limits<double>::infinity();
            const Eigen::MatrixXcd inv = V * lam.cwiseInverse().cast<cdouble>().asDiagonal() * V.adjoint();
            Eigen::Index col = 0;
            for (Eigen::Index a = 0; a < Di; ++a) coeff(col++, kk) = inv(a, a).real();
            for (Eigen::Index a = 0; a < Di; ++a)
                for (Eigen::Index b = a + 1; b < Di; ++b) {
                    coeff(col++, kk) = 2.0 * inv(a, b).real();
                    coeff(col++, kk) = -2.0 * inv(a, b).imag();
                }
        }

        // E-step
        quad.noalias() = phi * coeff;
        std::vector<double> scale(K);
        for (std::size_t k = 0; k < K; ++k) scale[k] = fit.pi[k] * std::exp(-logdet[k]);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < Ki; ++k) {
                const double v = actv(i, k) * scale[static_cast<std::size_t>(k)] * std::pow(quad(i, k), -Dd);
                gamma(i, k) = v;
                s += v;
            }
            if (s > 0.0 && std::isfinite(s) && s > 1e-250) {
                gamma.row(i) /= s;
                ll += log_norm + std::log(s);
                continue;
            }
            // direct evaluation left the double range; redo in the log domain
            double top = -std::numeric_limits<double>::infinity();
            for (Eigen::Index k = 0; k < Ki; ++k) {
                const double a = actv(i, k);
                const double v = a > 0.0 ? std::log(a) + logpi[static_cast<std::size_t>(k)] -
                                                logdet[static_cast<std::size_t>(k)] - Dd * std::log(quad(i, k))
                                          : -std::numeric_limits<double>::infinity();
                gamma(i, k) = v;
                top = std::max(top, v);
            }
            if (!std::isfinite(top)) {
                // no class can explain the observation; keep the prior
                gamma.row(i) = actv.row(i) / actv.row(i).sum();
                continue;
            }
            s = 0.0;
            for (Eigen::Index k = 0; k < Ki; ++k) {
                gamma(i, k) = std::exp(gamma(i, k) - top);
                s += gamma(i, k);
            }
            gamma.row(i) /= s;
            ll += log_norm + top + std::log(s);
        }
        fit.loglik.push_back(ll);
    }

    std::vector<bool> seen(T, false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t t = frames[static_cast<std::size_t>(i)];
        seen[t] = true;
        for (std::size_t k = 0; k < K; ++k) masks.at(k, t, f) = gamma(i, static_cast<Eigen::Index>(k));
    }
    // silent frames follow the activity prior
    for (std::size_t t = 0; t < T; ++t) {
        if (seen[t]) continue;
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += act.values[k][t] * fit.pi[k];
        const bool use_pi = s > 0.0;
        if (!use_pi)
            for (std::size_t k = 0; k < K; ++k) s += act.values[k][t];
        for (std::size_t k = 0; k < K; ++k)
            masks.at(k, t, f) = act.values[k][t] * (use_pi ? fit.pi[k] : 1.0) / s;
    }
    return fit;
}

}  // namespace detail

/// Complex angular central Gaussian mixture fitted per frequency bin by EM.
/// The activity matrix multiplies the class priors in every E-step, so a
/// class with zero activity at a frame gets exactly zero posterior there.
inline CacgmmResult cacgmm_em(const StftTensor& tensor, const ActivityMatrix& activity, std::size_t iterations) {
    require(tensor.channels >= 2, "cACGMM needs at least 2 channels");
    require(iterations >= 1, "need at least one EM iteration");
    activity.validate();
    require(activity.frames == tensor.frames, "activity frame count " + std::to_string(activity.frames) +
                                                  " differs from tensor frame count " +
                                                  std::to_string(tensor.frames));

    const std::size_t K = activity.classes(), F = tensor.bins, T = tensor.frames;
    double mean_power = 0.0;
    for (const auto& v : tensor.values) mean_power += std::norm(v);
    mean_power = tensor.values.empty() ? 0.0 : mean_power / static_cast<double>(tensor.values.size());
    const double silence_power = 1e-20 * mean_power * static_cast<double>(tensor.channels);

    CacgmmResult out;
    out.masks.classes = K;
    out.masks.frames = T;
    out.masks.bins = F;
    out.masks.gamma.assign(K * T * F, 0.0);

    std::vector<detail::BinFit> fits(F);
    parallel_for(F, [&](std::size_t f) {
        fits[f] = detail::fit_bin(tensor, activity, f, iterations, silence_power, out.masks);
    });

    out.params.classes = K;
    out.params.bins = F;
    out.params.channels = tensor.channels;
    out.params.pi.reserve(F * K);
    out.params.shape.reserve(F * K);
    out.loglik.assign(iterations, 0.0);
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t k = 0; k < K; ++k) {
            out.params.pi.push_back(fits[f].pi[k]);
            out.params.shape.push_back(std::move(fits[f].shape[k]));
        }
        for (std::size_t i = 0; i < iterations; ++i) out.loglik[i] += fits[f].loglik[i];
        out.excluded_observations += fits[f].excluded;
    }
    return out;
}

}  // namespace farfield
