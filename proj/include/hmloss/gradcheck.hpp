#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmloss/loss_spec.hpp"
#include "hmloss/math.hpp"

namespace hmloss {

struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    int trials = 0;
    int resampled = 0; // instances rejected for near-degenerate angles
    double max_rel_err = 0.0;
    std::vector<GradCheckBlock> blocks;
    bool passed(double tol = 1e-5) const { return trials > 0 && max_rel_err < tol; }
};

namespace detail {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-3});
    return std::fabs(a - b) / denom;
}

struct GradCheckInstance {
    EmbeddingBatch xb;
    LabelBatch yb;
    ClassifierHead head;
};

/// Small random instance (N<=4, d<=8, n<=5). Margin losses resample until no
/// cosine is within 1e-3 of the clamp and no target angle is within 1e-3 of a
/// non-smooth point (psi interval boundary / arcface fallback switch).
inline GradCheckInstance random_instance(const LossSpec& spec, std::mt19937_64& rng,
                                         int& resampled) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> pick_n_samples(1, 4), pick_dim(2, 8), pick_classes(2, 5);
    std::uniform_real_distribution<double> row_scale(0.5, 2.0);

    const bool angular = !uses_bias(spec.kind);
    for (int attempt = 0; attempt < 200; ++attempt) {
        GradCheckInstance inst;
        const int N = pick_n_samples(rng), d = pick_dim(rng), n = pick_classes(rng);
        inst.xb.x = Matrix(N, d);
        for (std::size_t i = 0; i < inst.xb.x.rows(); ++i) {
            const double s = row_scale(rng);
            for (std::size_t k = 0; k < inst.xb.x.cols(); ++k) inst.xb.x(i, k) = s * gauss(rng);
        }
        inst.yb.n_classes = n;
        inst.yb.y.resize(N);
        std::uniform_int_distribution<int> pick_label(0, n - 1);
        for (int i = 0; i < N; ++i) inst.yb.y[i] = pick_label(rng);
        inst.head.w = Matrix(d, n);
        for (double& v : inst.head.w.storage()) v = gauss(rng);
        inst.head.b.assign(n, 0.0);
        inst.head.norm_mode = required_norm_mode(spec.kind);
        if (uses_bias(spec.kind))
            for (double& v : inst.head.b) v = 0.3 * gauss(rng);

        if (!angular)
            return inst;

        const CosSimMatrix cos = cosine_matrix(inst.xb, inst.head);
        bool ok = true;
        for (double c : cos.c.storage())
            if (std::fabs(c) > 1.0 - 1e-3) ok = false;
        if (ok && (spec.kind == LossKind::angular_softmax ||
                   spec.kind == LossKind::hm_angular_softmax)) {
            const int m = spec.angular.margin;
            for (int i = 0; i < N && ok; ++i) {
                const double theta = std::acos(cos.c(i, inst.yb.y[i]));
                for (int k = 1; k < m; ++k)
                    if (std::fabs(theta - k * std::numbers::pi / m) < 1e-3) ok = false;
            }
        }
        if (ok && (spec.kind == LossKind::arcface || spec.kind == LossKind::hm_arcface)) {
            const double switch_cos = -std::cos(spec.arc.margin);
            for (int i = 0; i < N && ok; ++i)
                if (std::fabs(cos.c(i, inst.yb.y[i]) - switch_cos) < 1e-3) ok = false;
        }
        if (ok)
            return inst;
        ++resampled;
    }
    throw std::runtime_error("gradcheck: could not sample a non-degenerate instance");
}

} // namespace detail

/// Randomized finite-difference verification of the analytic gradients for
/// one loss configuration. `corrupt_first` perturbs one analytic entry of the
/// first trial, as a negative control that the checker actually bites.
inline GradCheckReport run_loss_gradcheck(const LossSpec& spec, std::uint64_t seed, int trials,
                                          double fd_step = 1e-5, bool corrupt_first = false) {
    if (trials < 1)
        throw std::invalid_argument("run_loss_gradcheck: trials must be >= 1");
    std::mt19937_64 rng(seed);
    GradCheckReport report;
    report.blocks = {{"x", 0.0}, {"w", 0.0}, {"b", 0.0}};

    for (int trial = 0; trial < trials; ++trial) {
        const detail::GradCheckInstance inst =
            detail::random_instance(spec, rng, report.resampled);
        const std::size_t nx = inst.xb.x.size(), nw = inst.head.w.size(),
                          nb = inst.head.b.size();

        Vector theta(nx + nw + nb);
        std::copy(inst.xb.x.storage().begin(), inst.xb.x.storage().end(), theta.begin());
        std::copy(inst.head.w.storage().begin(), inst.head.w.storage().end(),
                  theta.begin() + nx);
        std::copy(inst.head.b.begin(), inst.head.b.end(), theta.begin() + nx + nw);

        const auto objective = [&](const Vector& flat) {
            detail::GradCheckInstance probe = inst;
            std::copy(flat.begin(), flat.begin() + nx, probe.xb.x.storage().begin());
            std::copy(flat.begin() + nx, flat.begin() + nx + nw, probe.head.w.storage().begin());
            std::copy(flat.begin() + nx + nw, flat.end(), probe.head.b.begin());
            return evaluate_head_loss(spec, probe.xb, probe.yb, probe.head).objective;
        };

        HeadLoss analytic = evaluate_head_loss(spec, inst.xb, inst.yb, inst.head);
        if (corrupt_first && trial == 0)
            analytic.grad_x(0, 0) += 0.01 * (1.0 + std::fabs(analytic.grad_x(0, 0)));

        const Vector fd = finite_diff_grad(objective, theta, fd_step);
        for (std::size_t k = 0; k < nx; ++k)
            report.blocks[0].max_rel_err = std::max(
                report.blocks[0].max_rel_err, detail::rel_err(analytic.grad_x.storage()[k], fd[k]));
        for (std::size_t k = 0; k < nw; ++k)
            report.blocks[1].max_rel_err =
                std::max(report.blocks[1].max_rel_err,
                         detail::rel_err(analytic.grad_w.storage()[k], fd[nx + k]));
        for (std::size_t k = 0; k < nb; ++k)
            report.blocks[2].max_rel_err = std::max(
                report.blocks[2].max_rel_err, detail::rel_err(analytic.grad_b[k], fd[nx + nw + k]));
        ++report.trials;
    }
    for (const GradCheckBlock& b : report.blocks)
        report.max_rel_err = std::max(report.max_rel_err, b.max_rel_err);
    return report;
}

} // namespace hmloss
