#pragma once

// Inner-loop kernels for dense layers and optimizer updates.
//
// Every kernel has a portable scalar reference in kernels_scalar.cpp. On x86-64
// an AVX2+FMA variant is compiled separately and picked at runtime when the CPU
// supports it. Reduction kernels (dot, affine) may differ from the reference in
// the last few ulps because of FMA contraction and lane-wise partial sums.
// Elementwise kernels (adam, lerp, relu) are bit-identical to the reference.

#include <cstddef>
#include <string_view>

namespace d2q::simd {

struct AdamCoeffs {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    std::string_view name;

    double (*dot)(const double* a, const double* b, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // y[r, o] = sum_i x[r, i] * w[o, i] + bias[o]  (x: rows x in, w: out x in)
    void (*affine)(const double* x, std::size_t rows, std::size_t in, const double* w,
                   const double* bias, std::size_t out, double* y);

    // dw[o, i] += sum_r dz[r, o] * x[r, i];  db[o] += sum_r dz[r, o]
    void (*accumulate_weight_grad)(const double* dz, const double* x, std::size_t rows,
                                   std::size_t in, std::size_t out, double* dw, double* db);

    // dx[r, i] = sum_o dz[r, o] * w[o, i]
    void (*input_grad)(const double* dz, const double* w, std::size_t rows, std::size_t in,
                       std::size_t out, double* dx);

    // In place: a = max(a, 0)
    void (*relu)(double* a, std::size_t n);

    // In place: g = (z > 0) ? g : 0
    void (*relu_backward)(const double* z, double* g, std::size_t n);

    // One bias-corrected Adam step over n parameters.
    void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoeffs& c);

    // target = (1 - tau) * target + tau * online
    void (*lerp)(double* target, const double* online, double tau, std::size_t n);
};

enum class Isa { Scalar, Avx2 };

const KernelTable& scalar_kernels();

// Null when the build has no AVX2 translation unit or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// Kernels used by the library. Chosen on first use: AVX2 when available,
// unless the environment variable D2Q_KERNELS=scalar is set.
const KernelTable& active();

// Force a kernel set. Returns false (and leaves the selection alone) if the
// requested ISA is unavailable.
bool select(Isa isa);

}  // namespace d2q::simd
