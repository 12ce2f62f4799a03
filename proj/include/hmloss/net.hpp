#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "hmloss/errors.hpp"
#include "hmloss/losses.hpp"
#include "hmloss/matrix.hpp"

namespace hmloss {

enum class Activation { relu, none };

struct DenseLayer {
    Matrix weight; // d_in x d_out
    Vector bias;   // d_out
    Activation activation = Activation::none;
};

/// Fully connected backbone producing embeddings. Layers chain
/// input_dim -> hidden... -> embedding_dim; hidden layers are relu, the final
/// layer is linear so the embedding is unbounded.
class DenseNet {
public:
    std::vector<DenseLayer> layers;

    static DenseNet make(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t embedding_dim) {
        if (input_dim < 1 || embedding_dim < 1)
            throw std::invalid_argument("DenseNet: dimensions must be positive");
        DenseNet net;
        std::size_t prev = input_dim;
        for (std::size_t h : hidden) {
            if (h < 1) throw std::invalid_argument("DenseNet: hidden width must be positive");
            net.layers.push_back({Matrix(prev, h), Vector(h, 0.0), Activation::relu});
            prev = h;
        }
        net.layers.push_back({Matrix(prev, embedding_dim), Vector(embedding_dim, 0.0),
                              Activation::none});
        return net;
    }

    std::size_t input_dim() const { return layers.front().weight.rows(); }
    std::size_t embedding_dim() const { return layers.back().weight.cols(); }
    std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }

    void validate() const {
        if (layers.empty())
            throw std::invalid_argument("DenseNet: no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const DenseLayer& L = layers[l];
            if (L.bias.size() != L.weight.cols())
                throw std::invalid_argument("DenseNet: bias length mismatch");
            if (l + 1 < layers.size() && L.weight.cols() != layers[l + 1].weight.rows())
                throw std::invalid_argument("DenseNet: layer dimensions do not chain");
        }
        if (layers.back().activation != Activation::none)
            throw std::invalid_argument("DenseNet: final layer must be linear");
    }

    /// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
    /// Entries are drawn row-major, layer by layer.
    void init_xavier(std::mt19937_64& rng) {
        for (DenseLayer& L : layers) {
            const double bound =
                std::sqrt(6.0 / static_cast<double>(L.weight.rows() + L.weight.cols()));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& v : L.weight.storage()) v = dist(rng);
            for (double& v : L.bias) v = 0.0;
        }
        bump_version();
    }

private:
    std::uint64_t version_ = 0;
};

/// Intermediate state captured by forward() and consumed by backward().
/// Tied to the parameter version it was computed against.
struct ForwardCache {
    std::uint64_t net_version = 0;
    std::vector<Matrix> inputs;          // a_0 (batch), a_1 ... a_{L-1}
    std::vector<Matrix> pre_activations; // z_1 ... z_L
};

struct ForwardResult {
    EmbeddingBatch embeddings;
    ForwardCache cache;
};

inline ForwardResult forward(const DenseNet& net, const Matrix& batch) {
    net.validate();
    if (batch.cols() != net.input_dim())
        throw std::invalid_argument("forward: batch width does not match input_dim");
    if (batch.rows() < 1)
        throw std::invalid_argument("forward: empty batch");

    ForwardResult out;
    out.cache.net_version = net.version();
    Matrix a = batch;
    for (const DenseLayer& L : net.layers) {
        out.cache.inputs.push_back(a);
        const std::size_t N = a.rows(), din = L.weight.rows(), dout = L.weight.cols();
        Matrix z(N, dout);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < dout; ++j) {
                double s = L.bias[j];
                for (std::size_t k = 0; k < din; ++k) s += a(i, k) * L.weight(k, j);
                z(i, j) = s;
            }
        out.cache.pre_activations.push_back(z);
        if (L.activation == Activation::relu) {
            for (double& v : z.storage()) v = v > 0.0 ? v : 0.0;
        }
        a = std::move(z);
    }
    out.embeddings.x = std::move(a);
    return out;
}

struct NetGradients {
    std::vector<Matrix> grad_weight;
    std::vector<Vector> grad_bias;
    Matrix grad_input;
};

/// Exact reverse-mode gradients; relu subgradient at 0 is 0. Throws
/// invalid_state_error if the cache predates a parameter update.
inline NetGradients backward(const DenseNet& net, const ForwardCache& cache,
                             const Matrix& grad_embedding) {
    net.validate();
    if (cache.net_version != net.version())
        throw invalid_state_error("backward: cache is stale, rerun forward");
    if (cache.inputs.size() != net.layers.size())
        throw std::invalid_argument("backward: cache does not match network depth");
    if (grad_embedding.rows() != cache.inputs.front().rows() ||
        grad_embedding.cols() != net.embedding_dim())
        throw std::invalid_argument("backward: gradient shape mismatch");

    NetGradients out;
    out.grad_weight.resize(net.layers.size());
    out.grad_bias.resize(net.layers.size());

    Matrix grad_a = grad_embedding;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const DenseLayer& L = net.layers[l];
        const Matrix& a_in = cache.inputs[l];
        const Matrix& z = cache.pre_activations[l];
        const std::size_t N = a_in.rows(), din = L.weight.rows(), dout = L.weight.cols();

        Matrix grad_z = std::move(grad_a);
        if (L.activation == Activation::relu) {
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < dout; ++j)
                    if (!(z(i, j) > 0.0)) grad_z(i, j) = 0.0;
        }

        Matrix gw(din, dout);
        Vector gb(dout, 0.0);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < dout; ++j) {
                const double g = grad_z(i, j);
                gb[j] += g;
                for (std::size_t k = 0; k < din; ++k) gw(k, j) += a_in(i, k) * g;
            }

        grad_a = Matrix(N, din);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t k = 0; k < din; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < dout; ++j) s += grad_z(i, j) * L.weight(k, j);
                grad_a(i, k) = s;
            }

        out.grad_weight[l] = std::move(gw);
        out.grad_bias[l] = std::move(gb);
    }
    out.grad_input = std::move(grad_a);
    return out;
}

} // namespace hmloss
