#include "d2q/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "d2q/error.hpp"
#include "d2q/random.hpp"
#include "d2q/simd/kernels.hpp"

namespace d2q::nn {
namespace {

std::uint64_t next_instance_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void check_finite(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            std::ostringstream msg;
            msg << what << " entry " << i << " is not finite (" << values[i] << ")";
            throw DivergenceError(msg.str());
        }
    }
}

}  // namespace

DenseNet::DenseNet(std::vector<std::size_t> layer_sizes, OutputHead head, double output_scale)
    : sizes_(std::move(layer_sizes)), head_(head), output_scale_(output_scale), id_(next_instance_id()) {
    if (sizes_.size() < 2) throw ConfigError("network needs at least an input and an output size");
    if (std::find(sizes_.begin(), sizes_.end(), std::size_t{0}) != sizes_.end())
        throw ConfigError("network layer sizes must be positive");
    if (!(output_scale_ > 0.0) || !std::isfinite(output_scale_))
        throw ConfigError("network output scale must be positive and finite");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        Slot s{sizes_[l], sizes_[l + 1], offset, offset + sizes_[l] * sizes_[l + 1]};
        offset = s.bias_offset + s.out;
        slots_.push_back(s);
    }
    params_.assign(offset, 0.0);
}

DenseNet::DenseNet(const DenseNet& other)
    : sizes_(other.sizes_),
      slots_(other.slots_),
      params_(other.params_),
      head_(other.head_),
      output_scale_(other.output_scale_),
      id_(next_instance_id()),
      version_(0) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
    if (this != &other) {
        sizes_ = other.sizes_;
        slots_ = other.slots_;
        params_ = other.params_;
        head_ = other.head_;
        output_scale_ = other.output_scale_;
        ++version_;
    }
    return *this;
}

std::span<double> DenseNet::mutable_params() {
    ++version_;
    return params_;
}

std::span<const double> DenseNet::weight(std::size_t layer) const {
    const Slot& s = slots_.at(layer);
    return {params_.data() + s.weight_offset, s.in * s.out};
}

std::span<const double> DenseNet::bias(std::size_t layer) const {
    const Slot& s = slots_.at(layer);
    return {params_.data() + s.bias_offset, s.out};
}

std::span<double> DenseNet::mutable_weight(std::size_t layer) {
    const Slot& s = slots_.at(layer);
    ++version_;
    return {params_.data() + s.weight_offset, s.in * s.out};
}

std::span<double> DenseNet::mutable_bias(std::size_t layer) {
    const Slot& s = slots_.at(layer);
    ++version_;
    return {params_.data() + s.bias_offset, s.out};
}

DenseNet init_net(std::uint64_t seed, std::vector<std::size_t> layer_sizes, OutputHead head,
                  double output_scale) {
    DenseNet net(std::move(layer_sizes), head, output_scale);
    Rng rng(seed);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes()[l]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : net.mutable_weight(l)) w = dist(rng);
    }
    return net;
}

void forward_into(const DenseNet& net, const Matrix& input, ForwardCache& cache) {
    if (input.cols() != net.input_size()) {
        std::ostringstream msg;
        msg << "forward: input width " << input.cols() << " does not match network input "
            << net.input_size();
        throw ShapeError(msg.str());
    }
    const auto& k = simd::active();
    const std::size_t layers = net.num_layers();
    const std::size_t rows = input.rows();
    cache.net_id = net.instance_id();
    cache.net_version = net.version();
    cache.activations.resize(layers + 1);
    cache.pre_activations.resize(layers);
    cache.activations[0] = input;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = net.layer_sizes()[l];
        const std::size_t out = net.layer_sizes()[l + 1];
        Matrix& z = cache.pre_activations[l];
        Matrix& a = cache.activations[l + 1];
        if (z.rows() != rows || z.cols() != out) z.resize(rows, out);
        k.affine(cache.activations[l].data(), rows, in, net.weight(l).data(), net.bias(l).data(), out,
                 z.data());
        a = z;
        if (l + 1 < layers) {
            k.relu(a.data(), a.size());
        } else if (net.head() == OutputHead::Tanh) {
            const double scale = net.output_scale();
            for (double& v : a.values()) v = scale * std::tanh(v);
        }
    }
}

ForwardCache forward(const DenseNet& net, const Matrix& input) {
    ForwardCache cache;
    forward_into(net, input, cache);
    return cache;
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    const ForwardCache cache = forward(net, Matrix::from_row(input));
    const auto out = cache.output().values();
    return {out.begin(), out.end()};
}

BackwardResult backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad,
                        const BackwardOptions& options) {
    if (cache.net_id != net.instance_id() || cache.net_version != net.version() ||
        cache.activations.size() != net.num_layers() + 1) {
        throw ContractError("backward: forward cache does not belong to this network state");
    }
    const std::size_t rows = cache.batch_size();
    if (output_grad.rows() != rows || output_grad.cols() != net.output_size())
        throw ShapeError("backward: output gradient shape does not match forward output");
    const Matrix* hidden_grad = options.last_hidden_grad;
    if (hidden_grad != nullptr &&
        (hidden_grad->rows() != rows || hidden_grad->cols() != net.last_hidden_size()))
        throw ShapeError("backward: last-hidden gradient shape does not match features");

    const auto& k = simd::active();
    const std::size_t layers = net.num_layers();
    BackwardResult result;
    if (options.param_grads) result.param_grads.assign(net.num_params(), 0.0);

    // delta holds dL/dz for the current layer.
    Matrix delta = output_grad;
    if (net.head() == OutputHead::Tanh) {
        const double scale = net.output_scale();
        const Matrix& y = cache.output();
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double t = y.data()[i] / scale;
            delta.data()[i] *= scale * (1.0 - t * t);
        }
    }
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = net.layer_sizes()[l];
        const std::size_t out = net.layer_sizes()[l + 1];
        const Matrix& x = cache.activations[l];
        if (options.param_grads) {
            k.accumulate_weight_grad(delta.data(), x.data(), rows, in, out,
                                     result.param_grads.data() + net.weight_offset(l),
                                     result.param_grads.data() + net.bias_offset(l));
        }
        Matrix dx(rows, in);
        k.input_grad(delta.data(), net.weight(l).data(), rows, in, out, dx.data());
        if (l + 1 == layers && hidden_grad != nullptr)
            k.axpy(1.0, hidden_grad->data(), dx.data(), dx.size());
        if (l == 0) {
            result.input_grad = std::move(dx);
        } else {
            k.relu_backward(cache.pre_activations[l - 1].data(), dx.data(), dx.size());
            delta = std::move(dx);
        }
    }
    return result;
}

AdamState::AdamState(std::size_t num_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(num_params, 0.0), v_(num_params, 0.0) {
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
        throw ConfigError("adam: lr and eps must be positive, betas in [0, 1)");
}

void AdamState::apply(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ShapeError("adam: gradient/parameter count does not match optimizer state");
    check_finite(grads, "adam: gradient");
    ++t_;
    const simd::AdamCoeffs c{lr_,
                             beta1_,
                             beta2_,
                             eps_,
                             1.0 - std::pow(beta1_, static_cast<double>(t_)),
                             1.0 - std::pow(beta2_, static_cast<double>(t_))};
    simd::active().adam(params.data(), grads.data(), m_.data(), v_.data(), params.size(), c);
    check_finite(params, "adam: updated parameter");
}

void adam_step(DenseNet& net, std::span<const double> grads, AdamState& state) {
    state.apply(net.mutable_params(), grads);
}

void polyak_update(DenseNet& target, const DenseNet& online, double tau) {
    if (target.layer_sizes() != online.layer_sizes())
        throw ShapeError("polyak_update: target and online networks differ in shape");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("polyak_update: tau must lie in [0, 1]");
    auto dst = target.mutable_params();
    simd::active().lerp(dst.data(), online.params().data(), tau, dst.size());
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine: vectors differ in length");
    const auto& k = simd::active();
    const double nu = std::sqrt(k.dot(u.data(), u.data(), u.size()));
    const double nv = std::sqrt(k.dot(v.data(), v.data(), v.size()));
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    return std::clamp(k.dot(u.data(), v.data(), u.size()) / (nu * nv), -1.0, 1.0);
}

double cosine_with_grads(std::span<const double> u, std::span<const double> v, std::span<double> du,
                         std::span<double> dv) {
    if (u.size() != v.size() || du.size() != u.size() || dv.size() != v.size())
        throw ShapeError("cosine: vectors differ in length");
    const auto& k = simd::active();
    const double uu = k.dot(u.data(), u.data(), u.size());
    const double vv = k.dot(v.data(), v.data(), v.size());
    const double nu = std::sqrt(uu);
    const double nv = std::sqrt(vv);
    if (nu < 1e-12 || nv < 1e-12) {
        std::fill(du.begin(), du.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        return 0.0;
    }
    const double inv = 1.0 / (nu * nv);
    const double c = k.dot(u.data(), v.data(), u.size()) * inv;
    for (std::size_t i = 0; i < u.size(); ++i) {
        du[i] = v[i] * inv - c * u[i] / uu;
        dv[i] = u[i] * inv - c * v[i] / vv;
    }
    return std::clamp(c, -1.0, 1.0);
}

}  // namespace d2q::nn
