#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "hmloss/errors.hpp"
#include "hmloss/losses.hpp"
#include "hmloss/math.hpp"

namespace hmloss {

enum class HardMiningMode { per_sample, batch_mean };

/// Hyperparameters of the hard-mining wrapper L -> alpha * L * sigmoid(beta * L).
/// `mode` selects whether the wrapper is applied to each per-sample loss or
/// once to the batch mean.
struct HardMiningParams {
    double alpha = 1.5;
    double beta = 1.1;
    SigmoidParams sigmoid{}; // slope 35, center 0.75
    HardMiningMode mode = HardMiningMode::per_sample;
};

inline void validate(const HardMiningParams& p) {
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha))
        throw std::invalid_argument("HardMiningParams: alpha must be positive");
    if (!(p.beta > 0.0) || !std::isfinite(p.beta))
        throw std::invalid_argument("HardMiningParams: beta must be positive");
    validate(p.sigmoid);
}

namespace detail {
inline double checked_loss(double loss, const char* who) {
    if (!(loss >= 0.0) || !std::isfinite(loss))
        throw std::invalid_argument(std::string(who) + ": loss must be finite and non-negative");
    return loss;
}
} // namespace detail

/// alpha * L * sigmoid(beta * L). Suppresses losses below the crossing point
/// and amplifies them above it; hard_mine(0) == 0 and hard_mine(L)/L -> alpha.
inline double hard_mine(double loss, const HardMiningParams& p) {
    validate(p);
    detail::checked_loss(loss, "hard_mine");
    return p.alpha * loss * param_sigmoid(p.beta * loss, p.sigmoid);
}

/// d(hard_mine)/dL = alpha * [g + L*beta*A*g*(1-g)], g = sigmoid(beta*L).
/// Strictly positive for L >= 0.
inline double hard_mine_derivative(double loss, const HardMiningParams& p) {
    validate(p);
    detail::checked_loss(loss, "hard_mine_derivative");
    const double t = p.sigmoid.slope * (p.beta * loss - p.sigmoid.center);
    double g, gm; // g = sigmoid(t'), gm = 1 - g, both evaluated without cancellation
    if (t >= 0.0) {
        const double e = std::exp(-t);
        g = 1.0 / (1.0 + e);
        gm = e / (1.0 + e);
    } else {
        const double e = std::exp(t);
        g = e / (1.0 + e);
        gm = 1.0 / (1.0 + e);
    }
    return p.alpha * (g + loss * p.beta * p.sigmoid.slope * g * gm);
}

/// Unique L* > 0 with hard_mine(L*) == L*: below it the wrapper suppresses,
/// above it amplifies. Exists only when alpha > 1 and the closed form
/// (center - ln(alpha-1)/slope) / beta is positive.
inline double crossing_point(const HardMiningParams& p) {
    validate(p);
    if (!(p.alpha > 1.0))
        throw no_crossing_error("crossing_point: alpha <= 1, the wrapper never amplifies");
    const double lstar = (p.sigmoid.center - std::log(p.alpha - 1.0) / p.sigmoid.slope) / p.beta;
    if (!(lstar > 0.0))
        throw no_crossing_error("crossing_point: no positive fixed point for these parameters");
    return lstar;
}

/// Literal step-by-step reference variant: alpha * (beta*L) * sigmoid(beta*L).
/// Algebraically equal to beta * hard_mine(L); kept separate because the two
/// published forms disagree by exactly that factor. Training uses hard_mine.
inline double hard_mine_alg1(double loss, const HardMiningParams& p) {
    validate(p);
    detail::checked_loss(loss, "hard_mine_alg1");
    const double x = p.beta * loss;
    return p.alpha * x * param_sigmoid(x, p.sigmoid);
}

/// Hard-mined view of a base loss evaluation. `grad_scale` holds the
/// d(L_HM)/dL factors: one per sample in per_sample mode, a single broadcast
/// factor in batch_mean mode. The effective gradient of the wrapped loss is
/// grad_scale[i] times sample i's contribution inside the base gradients.
struct WrappedLossOutput {
    LossOutput base;
    double hm_mean_loss = 0.0;
    Vector hm_per_sample;
    Vector grad_scale;
};

inline WrappedLossOutput wrap_loss(LossOutput base, const HardMiningParams& p) {
    validate(p);
    if (base.per_sample.empty())
        throw std::invalid_argument("wrap_loss: base output has no per-sample losses");
    WrappedLossOutput out;
    out.hm_per_sample.resize(base.per_sample.size());
    for (std::size_t i = 0; i < base.per_sample.size(); ++i)
        out.hm_per_sample[i] = hard_mine(base.per_sample[i], p);
    if (p.mode == HardMiningMode::per_sample) {
        double sum = 0.0;
        for (double v : out.hm_per_sample) sum += v;
        out.hm_mean_loss = sum / static_cast<double>(out.hm_per_sample.size());
        out.grad_scale.resize(base.per_sample.size());
        for (std::size_t i = 0; i < base.per_sample.size(); ++i)
            out.grad_scale[i] = hard_mine_derivative(base.per_sample[i], p);
    } else {
        out.hm_mean_loss = hard_mine(base.mean_loss, p);
        out.grad_scale.assign(1, hard_mine_derivative(base.mean_loss, p));
    }
    out.base = std::move(base);
    return out;
}

} // namespace hmloss
