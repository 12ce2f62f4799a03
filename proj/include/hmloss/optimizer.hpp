#pragma once

#include <span>
#include <stdexcept>

namespace hmloss {

/// Classic (non-Nesterov) momentum update on one flat parameter block:
///   v <- momentum * v + (g + weight_decay * p);   p <- p - lr * v
inline void sgdm_step(std::span<double> params, std::span<const double> grads,
                      std::span<double> velocity, double lr, double momentum,
                      double weight_decay) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw std::invalid_argument("sgdm_step: mismatched block sizes");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + (grads[i] + weight_decay * params[i]);
        params[i] -= lr * velocity[i];
    }
}

} // namespace hmloss
