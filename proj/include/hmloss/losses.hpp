#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "hmloss/errors.hpp"
#include "hmloss/math.hpp"
#include "hmloss/matrix.hpp"

namespace hmloss {

enum class NormMode { none, unit_columns };

/// Batch of feature vectors fed to a loss head; rows are samples.
struct EmbeddingBatch {
    Matrix x; // N x d
    std::size_t size() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
};

struct LabelBatch {
    std::vector<int> y;
    int n_classes = 0;
    std::size_t size() const { return y.size(); }
};

/// Linear classifier head. Column j of `w` is class j's weight vector.
/// With unit_columns, normalization is applied functionally at loss time;
/// the stored parameters stay unconstrained and receive gradients through
/// the normalization map.
struct ClassifierHead {
    Matrix w; // d x n
    Vector b; // length n
    NormMode norm_mode = NormMode::none;
    std::size_t dim() const { return w.rows(); }
    std::size_t classes() const { return w.cols(); }
};

/// Multiplicative angular margin (integer m >= 1).
struct AngularMarginParams {
    int margin = 4;
};

/// Additive angular margin on a scaled hypersphere: s > 0, 0 <= margin < pi.
struct ArcMarginParams {
    double scale = 64.0;
    double margin = 0.5;
};

/// cos(theta) between every sample and every head column, both normalized.
/// Entries are clamped into [-1 + kCosineClamp, 1 - kCosineClamp].
struct CosSimMatrix {
    Matrix c; // N x n
};

struct LossOutput {
    double mean_loss = 0.0;
    Vector per_sample; // length N
    Matrix grad_x;     // N x d, gradient of mean_loss w.r.t. embeddings
    Matrix grad_w;     // d x n, gradient w.r.t. raw head weights
    Vector grad_b;     // length n; zero when the loss ignores the bias
};

/// Piecewise monotone extension of cos(m*theta) to [0, pi]:
/// (-1)^k cos(m*theta) - 2k on [k*pi/m, (k+1)*pi/m], k = 0..m-1.
inline double psi(double theta, int m) {
    if (m < 1)
        throw std::invalid_argument("psi: margin must be a positive integer");
    if (!(theta >= 0.0 && theta <= std::numbers::pi))
        throw std::invalid_argument("psi: theta outside [0, pi]");
    const int k = std::min(static_cast<int>(std::floor(theta * m / std::numbers::pi)), m - 1);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return sign * std::cos(m * theta) - 2.0 * k;
}

/// d(psi)/d(theta); the right-hand derivative at interval boundaries.
inline double psi_derivative(double theta, int m) {
    if (m < 1)
        throw std::invalid_argument("psi_derivative: margin must be a positive integer");
    if (!(theta >= 0.0 && theta <= std::numbers::pi))
        throw std::invalid_argument("psi_derivative: theta outside [0, pi]");
    const int k = std::min(static_cast<int>(std::floor(theta * m / std::numbers::pi)), m - 1);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return -sign * m * std::sin(m * theta);
}

namespace detail {

inline void validate_batch(const EmbeddingBatch& xb, const LabelBatch& yb,
                           const ClassifierHead& head) {
    if (xb.size() < 1 || xb.dim() < 1)
        throw std::invalid_argument("loss: empty embedding batch");
    if (yb.size() != xb.size())
        throw std::invalid_argument("loss: label count does not match batch size");
    if (yb.n_classes < 1)
        throw std::invalid_argument("loss: class count must be positive");
    if (head.dim() != xb.dim())
        throw std::invalid_argument("loss: head dimension does not match embeddings");
    if (head.classes() != static_cast<std::size_t>(yb.n_classes))
        throw std::invalid_argument("loss: head class count does not match labels");
    if (head.b.size() != head.classes())
        throw std::invalid_argument("loss: bias length does not match class count");
    if (!all_finite(xb.x) || !all_finite(head.w) || !all_finite(head.b))
        throw std::invalid_argument("loss: non-finite input");
    for (int label : yb.y)
        if (label < 0 || label >= yb.n_classes)
            throw std::invalid_argument("loss: label out of range");
}

inline double grad_weight(std::span<const double> w, std::size_t i) {
    return w.empty() ? 1.0 : w[i];
}

/// Normalized head columns and their raw norms. Zero-norm columns are
/// degenerate (no direction to compare against).
struct NormalizedColumns {
    Matrix unit; // d x n
    Vector norms;
};

inline NormalizedColumns normalize_columns(const ClassifierHead& head) {
    const std::size_t d = head.dim(), n = head.classes();
    NormalizedColumns out{Matrix(d, n), Vector(n)};
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += head.w(k, j) * head.w(k, j);
        const double rho = std::sqrt(s);
        if (!(rho > 0.0))
            throw degenerate_input_error("zero-norm class weight column");
        out.norms[j] = rho;
        for (std::size_t k = 0; k < d; ++k) out.unit(k, j) = head.w(k, j) / rho;
    }
    return out;
}

/// Cross-entropy on raw logits W^T x + b. `grad_weights`, when non-empty,
/// scales sample i's gradient contribution: gradients are those of
/// (1/N) * sum_i w_i * L_i. Reported losses are always unweighted.
inline LossOutput cross_entropy_eval(const EmbeddingBatch& xb, const LabelBatch& yb,
                                     const ClassifierHead& head,
                                     std::span<const double> grad_weights) {
    validate_batch(xb, yb, head);
    if (head.norm_mode != NormMode::none)
        throw std::invalid_argument("cross_entropy: head must use norm_mode = none");
    const std::size_t N = xb.size(), d = xb.dim(), n = head.classes();

    LossOutput out;
    out.per_sample.resize(N);
    out.grad_x = Matrix(N, d);
    out.grad_w = Matrix(d, n);
    out.grad_b.assign(n, 0.0);

    Vector logits(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double z = head.b[j];
            for (std::size_t k = 0; k < d; ++k) z += head.w(k, j) * xb.x(i, k);
            logits[j] = z;
        }
        const int y = yb.y[i];
        const double lse = log_sum_exp(logits);
        const double loss = lse - logits[static_cast<std::size_t>(y)];
        out.per_sample[i] = loss;
        sum += loss;

        const double scale = grad_weight(grad_weights, i) / static_cast<double>(N);
        for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(logits[j] - lse);
            const double g = scale * (p - (static_cast<int>(j) == y ? 1.0 : 0.0));
            out.grad_b[j] += g;
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_w(k, j) += g * xb.x(i, k);
                out.grad_x(i, k) += g * head.w(k, j);
            }
        }
    }
    out.mean_loss = sum / static_cast<double>(N);
    return out;
}

/// Shared scaffolding for the two angular losses: per-sample norm, unit
/// direction and clamped cosines against the normalized head columns.
struct AngularSample {
    double r = 0.0;             // ||x_i||
    Vector xhat;                // x_i / r
    Vector cos_clamped;         // length n
    std::vector<bool> in_range; // clamp inactive -> derivative flows
};

inline AngularSample angular_sample(const EmbeddingBatch& xb, std::size_t i,
                                    const NormalizedColumns& cols) {
    const std::size_t d = xb.dim(), n = cols.norms.size();
    AngularSample s;
    s.r = norm(xb.x.row(i));
    if (!(s.r > 0.0))
        throw degenerate_input_error("zero-norm embedding");
    s.xhat.resize(d);
    for (std::size_t k = 0; k < d; ++k) s.xhat[k] = xb.x(i, k) / s.r;
    s.cos_clamped.resize(n);
    s.in_range.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double u = 0.0;
        for (std::size_t k = 0; k < d; ++k) u += s.xhat[k] * cols.unit(k, j);
        s.cos_clamped[j] = clamp_cosine(u);
        s.in_range[j] = (u > -1.0 + kCosineClamp) && (u < 1.0 - kCosineClamp);
    }
    return s;
}

/// Angular-softmax: target logit ||x||*psi(theta_y), non-target ||x||*cos(theta_j).
inline LossOutput angular_softmax_eval(const EmbeddingBatch& xb, const LabelBatch& yb,
                                       const ClassifierHead& head, const AngularMarginParams& p,
                                       std::span<const double> grad_weights) {
    validate_batch(xb, yb, head);
    if (head.norm_mode != NormMode::unit_columns)
        throw std::invalid_argument("angular_softmax: head must use norm_mode = unit_columns");
    if (p.margin < 1)
        throw std::invalid_argument("angular_softmax: margin must be >= 1");
    const std::size_t N = xb.size(), d = xb.dim(), n = head.classes();
    const NormalizedColumns cols = normalize_columns(head);

    LossOutput out;
    out.per_sample.resize(N);
    out.grad_x = Matrix(N, d);
    out.grad_w = Matrix(d, n);
    out.grad_b.assign(n, 0.0); // bias unused by this loss

    Vector logits(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const AngularSample s = angular_sample(xb, i, cols);
        const std::size_t y = static_cast<std::size_t>(yb.y[i]);

        const double cy = s.cos_clamped[y];
        const double theta = std::acos(cy);
        const double psi_v = psi(theta, p.margin);
        const double psi_d = psi_derivative(theta, p.margin);
        const double sin_theta = std::sqrt(1.0 - cy * cy); // > 0 after clamp

        for (std::size_t j = 0; j < n; ++j)
            logits[j] = s.r * (j == y ? psi_v : s.cos_clamped[j]);
        const double lse = log_sum_exp(logits);
        const double loss = lse - logits[y];
        out.per_sample[i] = loss;
        sum += loss;

        const double scale = grad_weight(grad_weights, i) / static_cast<double>(N);
        for (std::size_t j = 0; j < n; ++j) {
            const double prob = std::exp(logits[j] - lse);
            const double g = scale * (prob - (j == y ? 1.0 : 0.0));
            const double c = s.cos_clamped[j];
            const bool live = s.in_range[j];
            if (j == y) {
                // f_y = r * psi(acos(c));  d f_y/dx = psi*xhat - [psi'/sin] (what - c*xhat)
                const double coef = live ? psi_d / sin_theta : 0.0;
                for (std::size_t k = 0; k < d; ++k)
                    out.grad_x(i, k) +=
                        g * (psi_v * s.xhat[k] - coef * (cols.unit(k, j) - c * s.xhat[k]));
                if (live) {
                    const double wcoef = -s.r * psi_d / (sin_theta * cols.norms[j]);
                    for (std::size_t k = 0; k < d; ++k)
                        out.grad_w(k, j) += g * wcoef * (s.xhat[k] - c * cols.unit(k, j));
                }
            } else {
                // f_j = r * c_j;  unclamped this is exactly x . what_j
                for (std::size_t k = 0; k < d; ++k)
                    out.grad_x(i, k) +=
                        g * (c * s.xhat[k] +
                             (live ? cols.unit(k, j) - c * s.xhat[k] : 0.0));
                if (live) {
                    const double wcoef = s.r / cols.norms[j];
                    for (std::size_t k = 0; k < d; ++k)
                        out.grad_w(k, j) += g * wcoef * (s.xhat[k] - c * cols.unit(k, j));
                }
            }
        }
    }
    out.mean_loss = sum / static_cast<double>(N);
    return out;
}

/// ArcFace: features and head columns normalized, target logit
/// s*cos(theta_y + m), non-target s*cos(theta_j). Past theta + m > pi the
/// target logit falls back to s*(cos(theta) - m*sin(m)), which stays
/// monotone in theta.
inline LossOutput arcface_eval(const EmbeddingBatch& xb, const LabelBatch& yb,
                               const ClassifierHead& head, const ArcMarginParams& p,
                               std::span<const double> grad_weights) {
    validate_batch(xb, yb, head);
    if (head.norm_mode != NormMode::unit_columns)
        throw std::invalid_argument("arcface: head must use norm_mode = unit_columns");
    if (!(p.scale > 0.0) || !std::isfinite(p.scale))
        throw std::invalid_argument("arcface: scale must be positive");
    if (!(p.margin >= 0.0 && p.margin < std::numbers::pi))
        throw std::invalid_argument("arcface: margin must lie in [0, pi)");
    const std::size_t N = xb.size(), d = xb.dim(), n = head.classes();
    const NormalizedColumns cols = normalize_columns(head);
    const double cos_m = std::cos(p.margin);
    const double sin_m = std::sin(p.margin);

    LossOutput out;
    out.per_sample.resize(N);
    out.grad_x = Matrix(N, d);
    out.grad_w = Matrix(d, n);
    out.grad_b.assign(n, 0.0); // bias unused by this loss

    Vector logits(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const AngularSample s = angular_sample(xb, i, cols);
        const std::size_t y = static_cast<std::size_t>(yb.y[i]);

        const double cy = s.cos_clamped[y];
        double phi, dphi;
        if (cy >= -cos_m) { // theta + m <= pi
            const double sin_theta = std::sqrt(1.0 - cy * cy);
            phi = cy * cos_m - sin_theta * sin_m;
            dphi = cos_m + cy * sin_m / sin_theta;
        } else {
            phi = cy - p.margin * sin_m;
            dphi = 1.0;
        }

        for (std::size_t j = 0; j < n; ++j)
            logits[j] = p.scale * (j == y ? phi : s.cos_clamped[j]);
        const double lse = log_sum_exp(logits);
        const double loss = lse - logits[y];
        out.per_sample[i] = loss;
        sum += loss;

        const double scale = grad_weight(grad_weights, i) / static_cast<double>(N);
        for (std::size_t j = 0; j < n; ++j) {
            const double prob = std::exp(logits[j] - lse);
            const double g = scale * (prob - (j == y ? 1.0 : 0.0));
            if (!s.in_range[j])
                continue; // clamp saturates every dependence on this cosine
            const double c = s.cos_clamped[j];
            const double chain = p.scale * (j == y ? dphi : 1.0);
            const double xcoef = g * chain / s.r;
            const double wcoef = g * chain / cols.norms[j];
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_x(i, k) += xcoef * (cols.unit(k, j) - c * s.xhat[k]);
                out.grad_w(k, j) += wcoef * (s.xhat[k] - c * cols.unit(k, j));
            }
        }
    }
    out.mean_loss = sum / static_cast<double>(N);
    return out;
}

} // namespace detail

/// Clamped cosine-similarity matrix between batch rows and head columns.
inline CosSimMatrix cosine_matrix(const EmbeddingBatch& xb, const ClassifierHead& head) {
    if (xb.size() < 1 || xb.dim() < 1)
        throw std::invalid_argument("cosine_matrix: empty embedding batch");
    if (head.dim() != xb.dim())
        throw std::invalid_argument("cosine_matrix: head dimension does not match embeddings");
    const detail::NormalizedColumns cols = detail::normalize_columns(head);
    CosSimMatrix out{Matrix(xb.size(), head.classes())};
    for (std::size_t i = 0; i < xb.size(); ++i) {
        const detail::AngularSample s = detail::angular_sample(xb, i, cols);
        for (std::size_t j = 0; j < head.classes(); ++j) out.c(i, j) = s.cos_clamped[j];
    }
    return out;
}

inline LossOutput cross_entropy(const EmbeddingBatch& xb, const LabelBatch& yb,
                                const ClassifierHead& head) {
    return detail::cross_entropy_eval(xb, yb, head, {});
}

inline LossOutput angular_softmax(const EmbeddingBatch& xb, const LabelBatch& yb,
                                  const ClassifierHead& head, const AngularMarginParams& p) {
    return detail::angular_softmax_eval(xb, yb, head, p, {});
}

inline LossOutput arcface(const EmbeddingBatch& xb, const LabelBatch& yb,
                          const ClassifierHead& head, const ArcMarginParams& p) {
    return detail::arcface_eval(xb, yb, head, p, {});
}

} // namespace hmloss
