#pragma once

// Shared helpers for the unit tests: random fixtures, an independent naive
// forward pass and central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "d2q/matrix.hpp"
#include "d2q/nn.hpp"
#include "d2q/random.hpp"

namespace testing {

inline d2q::Matrix random_matrix(d2q::Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                                 double hi = 1.0) {
    d2q::Matrix m(rows, cols);
    for (double& v : m.values()) v = d2q::uniform(rng, lo, hi);
    return m;
}

inline std::vector<double> random_vector(d2q::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = d2q::uniform(rng, lo, hi);
    return v;
}

// Net with nonzero biases so bias gradients are exercised too.
inline d2q::nn::DenseNet random_net(std::uint64_t seed, std::vector<std::size_t> sizes,
                                    d2q::nn::OutputHead head = d2q::nn::OutputHead::Identity,
                                    double scale = 1.0) {
    d2q::nn::DenseNet net = d2q::nn::init_net(seed, std::move(sizes), head, scale);
    d2q::Rng rng(seed ^ 0xabcdefULL);
    for (std::size_t l = 0; l < net.num_layers(); ++l)
        for (double& b : net.mutable_bias(l)) b = d2q::uniform(rng, -0.2, 0.2);
    return net;
}

// Textbook forward pass on nested vectors; shares nothing with the library kernels.
inline std::vector<std::vector<double>> naive_forward(const d2q::nn::DenseNet& net, const d2q::Matrix& x,
                                                      std::vector<std::vector<double>>* last_hidden = nullptr) {
    std::vector<std::vector<double>> out;
    if (last_hidden) last_hidden->clear();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> a(x.row(r).begin(), x.row(r).end());
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            const std::size_t in = net.layer_sizes()[l];
            const std::size_t o = net.layer_sizes()[l + 1];
            if (l + 1 == net.num_layers() && last_hidden) last_hidden->push_back(a);
            std::vector<double> z(o);
            for (std::size_t j = 0; j < o; ++j) {
                double s = net.bias(l)[j];
                for (std::size_t i = 0; i < in; ++i) s += net.weight(l)[j * in + i] * a[i];
                z[j] = s;
            }
            if (l + 1 < net.num_layers()) {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            } else if (net.head() == d2q::nn::OutputHead::Tanh) {
                for (double& v : z) v = net.output_scale() * std::tanh(v);
            }
            a = std::move(z);
        }
        out.push_back(std::move(a));
    }
    return out;
}

// Central difference of f with respect to each entry of x, restoring x afterwards.
inline std::vector<double> finite_difference(std::span<double> x, const std::function<double()>& f,
                                             double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double plus = f();
        x[i] = saved - h;
        const double minus = f();
        x[i] = saved;
        g[i] = (plus - minus) / (2.0 * h);
    }
    return g;
}

// |a - b| relative to the larger magnitude, with an absolute floor so that
// entries whose true value is ~0 are judged on the scale of the roundoff in the
// finite difference.
inline double relative_error(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
    return worst;
}

}  // namespace testing
