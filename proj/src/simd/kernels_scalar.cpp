#include "d2q/simd/kernels.hpp"

#include <cmath>

namespace d2q::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void affine(const double* x, std::size_t rows, std::size_t in, const double* w,
            const double* bias, std::size_t out, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * in;
        double* yr = y + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = dot(xr, w + o * in, in) + bias[o];
    }
}

void accumulate_weight_grad(const double* dz, const double* x, std::size_t rows, std::size_t in,
                            std::size_t out, double* dw, double* db) {
    for (std::size_t o = 0; o < out; ++o) {
        double* dwo = dw + o * in;
        double bsum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double g = dz[r * out + o];
            bsum += g;
            axpy(g, x + r * in, dwo, in);
        }
        db[o] += bsum;
    }
}

void input_grad(const double* dz, const double* w, std::size_t rows, std::size_t in,
                std::size_t out, double* dx) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* dxr = dx + r * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
        for (std::size_t o = 0; o < out; ++o) axpy(dz[r * out + o], w + o * in, dxr, in);
    }
}

void relu(double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_backward(const double* z, double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] = z[i] > 0.0 ? g[i] : 0.0;
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamCoeffs& c) {
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

void lerp(double* target, const double* online, double tau, std::size_t n) {
    const double keep = 1.0 - tau;
    for (std::size_t i = 0; i < n; ++i) target[i] = keep * target[i] + tau * online[i];
}

constexpr KernelTable kScalar{
    "scalar", dot, axpy, affine, accumulate_weight_grad, input_grad,
    relu,     relu_backward, adam, lerp,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace d2q::simd
