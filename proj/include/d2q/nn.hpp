#pragma once

// Dense feedforward networks with hand-written reverse-mode gradients.
//
// Parameters live in one flat buffer laid out layer by layer as
// [W_0 (out x in, row-major), b_0, W_1, b_1, ...]. Gradients, Adam moments and
// Polyak averaging all use the same layout, which keeps them elementwise.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "d2q/matrix.hpp"

namespace d2q::nn {

enum class OutputHead {
    Identity,  // critics
    Tanh,      // actors: output_scale * tanh(z)
};

class DenseNet {
public:
    DenseNet() = default;
    // Zero-initialised parameters. Throws ConfigError on fewer than two sizes or a zero size.
    DenseNet(std::vector<std::size_t> layer_sizes, OutputHead head, double output_scale = 1.0);

    DenseNet(const DenseNet& other);
    DenseNet& operator=(const DenseNet& other);
    DenseNet(DenseNet&&) noexcept = default;
    DenseNet& operator=(DenseNet&&) noexcept = default;

    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    // Width of the activation feeding the output layer (the input width for a single-layer net).
    std::size_t last_hidden_size() const { return sizes_[sizes_.size() - 2]; }
    OutputHead head() const { return head_; }
    double output_scale() const { return output_scale_; }

    std::size_t num_params() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    // Any mutable access invalidates outstanding forward caches.
    std::span<double> mutable_params();

    std::span<const double> weight(std::size_t layer) const;
    std::span<const double> bias(std::size_t layer) const;
    std::span<double> mutable_weight(std::size_t layer);
    std::span<double> mutable_bias(std::size_t layer);
    std::size_t weight_offset(std::size_t layer) const { return slots_[layer].weight_offset; }
    std::size_t bias_offset(std::size_t layer) const { return slots_[layer].bias_offset; }

    std::uint64_t instance_id() const { return id_; }
    std::uint64_t version() const { return version_; }

    bool same_parameters(const DenseNet& other) const {
        return sizes_ == other.sizes_ && head_ == other.head_ &&
               output_scale_ == other.output_scale_ && params_ == other.params_;
    }

private:
    struct Slot {
        std::size_t in;
        std::size_t out;
        std::size_t weight_offset;
        std::size_t bias_offset;
    };

    std::vector<std::size_t> sizes_;
    std::vector<Slot> slots_;
    std::vector<double> params_;
    OutputHead head_ = OutputHead::Identity;
    double output_scale_ = 1.0;
    std::uint64_t id_ = 0;
    std::uint64_t version_ = 0;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
DenseNet init_net(std::uint64_t seed, std::vector<std::size_t> layer_sizes, OutputHead head,
                  double output_scale = 1.0);

struct ForwardCache {
    std::uint64_t net_id = 0;
    std::uint64_t net_version = 0;
    // activations[0] is the input, activations[L] the output; pre_activations[l] feeds activations[l + 1].
    std::vector<Matrix> activations;
    std::vector<Matrix> pre_activations;

    const Matrix& output() const { return activations.back(); }
    // Features f_q: the post-ReLU activation entering the output layer.
    const Matrix& last_hidden() const { return activations[activations.size() - 2]; }
    std::size_t batch_size() const { return activations.front().rows(); }
};

// Batched forward pass; one row per sample. Throws ShapeError on width mismatch.
ForwardCache forward(const DenseNet& net, const Matrix& input);
void forward_into(const DenseNet& net, const Matrix& input, ForwardCache& cache);
// Single sample convenience.
std::vector<double> forward(const DenseNet& net, std::span<const double> input);

struct BackwardResult {
    std::vector<double> param_grads;  // empty when not requested
    Matrix input_grad;
};

struct BackwardOptions {
    // Extra dL/d(last_hidden), same shape as cache.last_hidden().
    const Matrix* last_hidden_grad = nullptr;
    bool param_grads = true;
};

// Reverse pass for a cache produced by forward() on this exact net state.
// Throws ContractError for a stale or foreign cache, ShapeError for a bad output gradient.
BackwardResult backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad,
                        const BackwardOptions& options = {});

class AdamState {
public:
    AdamState() = default;
    AdamState(std::size_t num_params, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

    double lr() const { return lr_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    std::uint64_t step() const { return t_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }

    // Apply one bias-corrected Adam step to a flat parameter span.
    // Throws DivergenceError if a gradient or an updated parameter is not finite.
    void apply(std::span<double> params, std::span<const double> grads);

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

void adam_step(DenseNet& net, std::span<const double> grads, AdamState& state);

// target <- (1 - tau) * target + tau * online, elementwise over all parameters.
void polyak_update(DenseNet& target, const DenseNet& online, double tau);

// Cosine similarity clamped to [-1, 1]; 0 when either norm is below 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

// Cosine plus its gradients with respect to both arguments (zero in the degenerate case).
double cosine_with_grads(std::span<const double> u, std::span<const double> v,
                         std::span<double> du, std::span<double> dv);

}  // namespace d2q::nn
