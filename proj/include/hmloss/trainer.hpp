#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmloss/data.hpp"
#include "hmloss/errors.hpp"
#include "hmloss/loss_spec.hpp"
#include "hmloss/net.hpp"
#include "hmloss/optimizer.hpp"

namespace hmloss {

struct TrainConfig {
    int batch_size = 64;
    double initial_lr = 0.01;
    std::vector<int> lr_decay_epochs = {8, 12, 16};
    double lr_decay_factor = 0.1;
    int epochs = 20;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 42;
    LossSpec loss{};
    // 128-wide default: narrower backbones let the multiplicative-margin
    // losses collapse the feature norms instead of rotating the embeddings.
    std::vector<std::size_t> hidden_dims = {128};
    std::size_t embedding_dim = 16;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1)
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (cfg.epochs < 1)
        throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(cfg.initial_lr > 0.0) || !std::isfinite(cfg.initial_lr))
        throw std::invalid_argument("TrainConfig: initial_lr must be positive");
    if (!(cfg.lr_decay_factor > 0.0 && cfg.lr_decay_factor <= 1.0))
        throw std::invalid_argument("TrainConfig: lr_decay_factor must be in (0, 1]");
    if (!std::is_sorted(cfg.lr_decay_epochs.begin(), cfg.lr_decay_epochs.end(),
                        std::less_equal<int>()))
        throw std::invalid_argument("TrainConfig: lr_decay_epochs must be strictly ascending");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay))
        throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
    if (cfg.embedding_dim < 1)
        throw std::invalid_argument("TrainConfig: embedding_dim must be >= 1");
    for (std::size_t h : cfg.hidden_dims)
        if (h < 1)
            throw std::invalid_argument("TrainConfig: hidden widths must be >= 1");
    validate(cfg.loss.hard_mining);
    if (cfg.loss.angular.margin < 1)
        throw std::invalid_argument("TrainConfig: angular margin must be >= 1");
    if (!(cfg.loss.arc.scale > 0.0))
        throw std::invalid_argument("TrainConfig: arc scale must be positive");
    if (!(cfg.loss.arc.margin >= 0.0 && cfg.loss.arc.margin < std::numbers::pi))
        throw std::invalid_argument("TrainConfig: arc margin must lie in [0, pi)");
}

/// Learning rate in effect during `epoch` (1-based). Each listed decay epoch
/// multiplies the rate by lr_decay_factor from the start of that epoch.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    validate(cfg);
    if (epoch < 1 || epoch > cfg.epochs)
        throw std::invalid_argument("lr_at_epoch: epoch out of range");
    int decays = 0;
    for (int e : cfg.lr_decay_epochs)
        if (e <= epoch) ++decays;
    return cfg.initial_lr * std::pow(cfg.lr_decay_factor, decays);
}

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double mean_base_loss = 0.0;
    /// NaN when the configured loss is not hard-mined.
    double mean_hm_loss = std::numeric_limits<double>::quiet_NaN();
    /// Fraction of samples whose base loss exceeded the crossing point;
    /// NaN when no crossing point exists for the configured parameters.
    double hard_fraction = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
    DenseNet net;
    ClassifierHead head;
    TrainConfig config;
    int epoch = 0;
    std::string rng_state; // textual std::mt19937_64 state
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> log;
};

/// Deterministic training loop: seeded Xavier init (net layers in order, then
/// the head), one seeded shuffle per epoch from the same stream, fixed batch
/// order and fixed reduction order, single-threaded. Identical config +
/// dataset + seed reproduce the checkpoint bit-for-bit.
inline TrainResult train(const TrainConfig& cfg, const IdentityDataset& ds) {
    validate(cfg);
    if (ds.size() == 0)
        throw std::invalid_argument("train: empty dataset");
    if (ds.n_identities < 1)
        throw std::invalid_argument("train: dataset declares no identities");
    for (int y : ds.labels)
        if (y < 0 || y >= ds.n_identities)
            throw std::invalid_argument("train: dataset label out of range");

    const std::size_t N = ds.size(), d = ds.dim();
    const std::size_t n_classes = static_cast<std::size_t>(ds.n_identities);

    std::mt19937_64 rng(cfg.seed);
    DenseNet net = DenseNet::make(d, cfg.hidden_dims, cfg.embedding_dim);
    net.init_xavier(rng);

    ClassifierHead head;
    head.norm_mode = required_norm_mode(cfg.loss.kind);
    head.w = Matrix(cfg.embedding_dim, n_classes);
    {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(cfg.embedding_dim + n_classes));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : head.w.storage()) v = dist(rng);
    }
    head.b.assign(n_classes, 0.0);

    double lstar = std::numeric_limits<double>::quiet_NaN();
    try {
        lstar = crossing_point(cfg.loss.hard_mining);
    } catch (const no_crossing_error&) {
        // hard_fraction stays NaN in the log
    }

    const bool wrapped = is_hard_mined(cfg.loss.kind);
    const bool head_bias = uses_bias(cfg.loss.kind);

    std::vector<Vector> vel_w(net.layers.size()), vel_b(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        vel_w[l].assign(net.layers[l].weight.size(), 0.0);
        vel_b[l].assign(net.layers[l].bias.size(), 0.0);
    }
    Vector vel_head_w(head.w.size(), 0.0), vel_head_b(head.b.size(), 0.0);

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double base_sum = 0.0, hm_sum = 0.0;
        std::size_t hard_count = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size, ++batch_index) {
            const std::size_t B = std::min<std::size_t>(cfg.batch_size, N - start);
            Matrix input(B, d);
            LabelBatch yb;
            yb.n_classes = ds.n_identities;
            yb.y.resize(B);
            for (std::size_t i = 0; i < B; ++i) {
                const int src = order[start + i];
                for (std::size_t k = 0; k < d; ++k) input(i, k) = ds.samples(src, k);
                yb.y[i] = ds.labels[src];
            }

            ForwardResult fr = forward(net, input);
            if (!all_finite(fr.embeddings.x) || !all_finite(head.w))
                throw diverged_error(epoch, batch_index);
            HeadLoss hl = evaluate_head_loss(cfg.loss, fr.embeddings, yb, head);
            if (!std::isfinite(hl.objective))
                throw diverged_error(epoch, batch_index);

            for (double v : hl.base.per_sample) {
                base_sum += v;
                if (!std::isnan(lstar) && v > lstar) ++hard_count;
            }
            if (wrapped) {
                if (cfg.loss.hard_mining.mode == HardMiningMode::per_sample) {
                    for (double v : hl.hm->hm_per_sample) hm_sum += v;
                } else {
                    hm_sum += hl.objective * static_cast<double>(B);
                }
            }

            NetGradients ng = backward(net, fr.cache, hl.grad_x);
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                sgdm_step(net.layers[l].weight.storage(), ng.grad_weight[l].storage(), vel_w[l],
                          lr, cfg.momentum, cfg.weight_decay);
                sgdm_step(net.layers[l].bias, ng.grad_bias[l], vel_b[l], lr, cfg.momentum,
                          cfg.weight_decay);
            }
            sgdm_step(head.w.storage(), hl.grad_w.storage(), vel_head_w, lr, cfg.momentum,
                      cfg.weight_decay);
            if (head_bias)
                sgdm_step(head.b, hl.grad_b, vel_head_b, lr, cfg.momentum, cfg.weight_decay);
            net.bump_version();
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.mean_base_loss = base_sum / static_cast<double>(N);
        if (wrapped) m.mean_hm_loss = hm_sum / static_cast<double>(N);
        if (!std::isnan(lstar))
            m.hard_fraction = static_cast<double>(hard_count) / static_cast<double>(N);
        result.log.push_back(m);
    }

    result.checkpoint.net = std::move(net);
    result.checkpoint.head = std::move(head);
    result.checkpoint.config = cfg;
    result.checkpoint.epoch = cfg.epochs;
    std::ostringstream os;
    os << rng;
    result.checkpoint.rng_state = os.str();
    return result;
}

} // namespace hmloss
