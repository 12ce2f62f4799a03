#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

#include "hmloss/matrix.hpp"

namespace hmloss {

/// Parameters of the shifted, sharpened sigmoid 1 / (1 + exp(-slope*(x - center))).
struct SigmoidParams {
    double slope = 35.0;   // must be > 0
    double center = 0.75;
};

inline void validate(const SigmoidParams& p) {
    if (!(p.slope > 0.0) || !std::isfinite(p.slope) || !std::isfinite(p.center))
        throw std::invalid_argument("SigmoidParams: slope must be positive and finite");
}

/// Overflow-safe evaluation of the parameterized sigmoid. Strictly increasing
/// in x, output in (0, 1), exactly 0.5 at x == center.
inline double param_sigmoid(double x, const SigmoidParams& p) {
    validate(p);
    if (!std::isfinite(x))
        throw std::invalid_argument("param_sigmoid: non-finite input");
    const double t = p.slope * (x - p.center);
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// log(sum_j exp(v_j)) via max-shift.
inline double log_sum_exp(std::span<const double> v) {
    if (v.empty())
        throw std::invalid_argument("log_sum_exp: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Clamp used before every arccos / sqrt(1-c^2) in the margin losses.
inline constexpr double kCosineClamp = 1e-7;

inline double clamp_cosine(double c) {
    return std::clamp(c, -1.0 + kCosineClamp, 1.0 - kCosineClamp);
}

/// arccos of the clamped cosine; output always inside (0, pi).
inline double safe_acos(double c) { return std::acos(clamp_cosine(c)); }

/// Central-difference gradient of f at theta, one coordinate at a time.
/// The independent oracle every analytic gradient in this library is
/// checked against.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                               Vector theta, double h = 1e-6) {
    if (!(h > 0.0))
        throw std::invalid_argument("finite_diff_grad: step must be positive");
    Vector grad(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double orig = theta[k];
        theta[k] = orig + h;
        const double fp = f(theta);
        theta[k] = orig - h;
        const double fm = f(theta);
        theta[k] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite evaluation at coordinate " +
                                     std::to_string(k));
        grad[k] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace hmloss
