// AVX2 + FMA kernels. Built with -mavx2 -mfma -ffp-contract=off so that the
// elementwise kernels round exactly like the scalar reference; reductions use
// explicit FMA intrinsics.

#include "d2q/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace d2q::simd {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Horizontal sums of four vectors packed into one: {hsum(a), hsum(b), hsum(c), hsum(d)}.
inline __m256d hsum4(__m256d a, __m256d b, __m256d c, __m256d d) {
    const __m256d ab = _mm256_hadd_pd(a, b);  // a0+a1 b0+b1 a2+a3 b2+b3
    const __m256d cd = _mm256_hadd_pd(c, d);
    const __m256d lo = _mm256_permute2f128_pd(ab, cd, 0x20);
    const __m256d hi = _mm256_permute2f128_pd(ab, cd, 0x31);
    return _mm256_add_pd(lo, hi);
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4)
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s = std::fma(a[i], b[i], s);
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// Two input rows against four weight rows at a time.
void affine(const double* x, std::size_t rows, std::size_t in, const double* w,
            const double* bias, std::size_t out, double* y) {
    const std::size_t in4 = in & ~std::size_t{3};
    std::size_t r = 0;
    for (; r + 2 <= rows; r += 2) {
        const double* x0 = x + r * in;
        const double* x1 = x0 + in;
        double* y0 = y + r * out;
        double* y1 = y0 + out;
        std::size_t o = 0;
        for (; o + 4 <= out; o += 4) {
            const double* w0 = w + o * in;
            const double* w1 = w0 + in;
            const double* w2 = w1 + in;
            const double* w3 = w2 + in;
            __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd();
            __m256d a02 = _mm256_setzero_pd(), a03 = _mm256_setzero_pd();
            __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd();
            __m256d a12 = _mm256_setzero_pd(), a13 = _mm256_setzero_pd();
            for (std::size_t i = 0; i < in4; i += 4) {
                const __m256d vx0 = _mm256_loadu_pd(x0 + i);
                const __m256d vx1 = _mm256_loadu_pd(x1 + i);
                __m256d vw = _mm256_loadu_pd(w0 + i);
                a00 = _mm256_fmadd_pd(vx0, vw, a00);
                a10 = _mm256_fmadd_pd(vx1, vw, a10);
                vw = _mm256_loadu_pd(w1 + i);
                a01 = _mm256_fmadd_pd(vx0, vw, a01);
                a11 = _mm256_fmadd_pd(vx1, vw, a11);
                vw = _mm256_loadu_pd(w2 + i);
                a02 = _mm256_fmadd_pd(vx0, vw, a02);
                a12 = _mm256_fmadd_pd(vx1, vw, a12);
                vw = _mm256_loadu_pd(w3 + i);
                a03 = _mm256_fmadd_pd(vx0, vw, a03);
                a13 = _mm256_fmadd_pd(vx1, vw, a13);
            }
            const __m256d vb = _mm256_loadu_pd(bias + o);
            __m256d s0 = _mm256_add_pd(hsum4(a00, a01, a02, a03), vb);
            __m256d s1 = _mm256_add_pd(hsum4(a10, a11, a12, a13), vb);
            if (in4 != in) {
                alignas(32) double t0[4], t1[4];
                _mm256_store_pd(t0, s0);
                _mm256_store_pd(t1, s1);
                for (std::size_t i = in4; i < in; ++i) {
                    for (int k = 0; k < 4; ++k) {
                        t0[k] = std::fma(x0[i], w0[k * in + i], t0[k]);
                        t1[k] = std::fma(x1[i], w0[k * in + i], t1[k]);
                    }
                }
                s0 = _mm256_load_pd(t0);
                s1 = _mm256_load_pd(t1);
            }
            _mm256_storeu_pd(y0 + o, s0);
            _mm256_storeu_pd(y1 + o, s1);
        }
        for (; o < out; ++o) {
            y0[o] = dot(x0, w + o * in, in) + bias[o];
            y1[o] = dot(x1, w + o * in, in) + bias[o];
        }
    }
    for (; r < rows; ++r) {
        const double* xr = x + r * in;
        double* yr = y + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = dot(xr, w + o * in, in) + bias[o];
    }
}

void accumulate_weight_grad(const double* dz, const double* x, std::size_t rows, std::size_t in,
                            std::size_t out, double* dw, double* db) {
    for (std::size_t o = 0; o < out; ++o) {
        double* dwo = dw + o * in;
        std::size_t i = 0;
        for (; i + 16 <= in; i += 16) {
            __m256d c0 = _mm256_loadu_pd(dwo + i);
            __m256d c1 = _mm256_loadu_pd(dwo + i + 4);
            __m256d c2 = _mm256_loadu_pd(dwo + i + 8);
            __m256d c3 = _mm256_loadu_pd(dwo + i + 12);
            for (std::size_t r = 0; r < rows; ++r) {
                const __m256d g = _mm256_set1_pd(dz[r * out + o]);
                const double* xr = x + r * in + i;
                c0 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr), c0);
                c1 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 4), c1);
                c2 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 8), c2);
                c3 = _mm256_fmadd_pd(g, _mm256_loadu_pd(xr + 12), c3);
            }
            _mm256_storeu_pd(dwo + i, c0);
            _mm256_storeu_pd(dwo + i + 4, c1);
            _mm256_storeu_pd(dwo + i + 8, c2);
            _mm256_storeu_pd(dwo + i + 12, c3);
        }
        for (; i + 4 <= in; i += 4) {
            __m256d c0 = _mm256_loadu_pd(dwo + i);
            for (std::size_t r = 0; r < rows; ++r)
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(dz[r * out + o]), _mm256_loadu_pd(x + r * in + i), c0);
            _mm256_storeu_pd(dwo + i, c0);
        }
        for (; i < in; ++i) {
            double c = dwo[i];
            for (std::size_t r = 0; r < rows; ++r) c = std::fma(dz[r * out + o], x[r * in + i], c);
            dwo[i] = c;
        }
        double bsum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) bsum += dz[r * out + o];
        db[o] += bsum;
    }
}

void input_grad(const double* dz, const double* w, std::size_t rows, std::size_t in,
                std::size_t out, double* dx) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* dzr = dz + r * out;
        double* dxr = dx + r * in;
        std::size_t i = 0;
        for (; i + 16 <= in; i += 16) {
            __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
            __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
            for (std::size_t o = 0; o < out; ++o) {
                const __m256d g = _mm256_set1_pd(dzr[o]);
                const double* wo = w + o * in + i;
                c0 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo), c0);
                c1 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 4), c1);
                c2 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 8), c2);
                c3 = _mm256_fmadd_pd(g, _mm256_loadu_pd(wo + 12), c3);
            }
            _mm256_storeu_pd(dxr + i, c0);
            _mm256_storeu_pd(dxr + i + 4, c1);
            _mm256_storeu_pd(dxr + i + 8, c2);
            _mm256_storeu_pd(dxr + i + 12, c3);
        }
        for (; i + 4 <= in; i += 4) {
            __m256d c0 = _mm256_setzero_pd();
            for (std::size_t o = 0; o < out; ++o)
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(dzr[o]), _mm256_loadu_pd(w + o * in + i), c0);
            _mm256_storeu_pd(dxr + i, c0);
        }
        for (; i < in; ++i) {
            double c = 0.0;
            for (std::size_t o = 0; o < out; ++o) c = std::fma(dzr[o], w[o * in + i], c);
            dxr[i] = c;
        }
    }
}

void relu(double* a, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(a + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_backward(const double* z, double* g, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(z + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(g + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) g[i] = z[i] > 0.0 ? g[i] : 0.0;
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamCoeffs& c) {
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    const __m256d b1 = _mm256_set1_pd(c.beta1), nb1 = _mm256_set1_pd(one_minus_b1);
    const __m256d b2 = _mm256_set1_pd(c.beta2), nb2 = _mm256_set1_pd(one_minus_b2);
    const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
    const __m256d lr = _mm256_set1_pd(c.lr), eps = _mm256_set1_pd(c.eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(nb1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(nb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d m_hat = _mm256_div_pd(mi, bc1);
        const __m256d v_hat = _mm256_div_pd(vi, bc2);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
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
    const __m256d vk = _mm256_set1_pd(keep), vt = _mm256_set1_pd(tau);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d t = _mm256_mul_pd(vk, _mm256_loadu_pd(target + i));
        _mm256_storeu_pd(target + i, _mm256_add_pd(t, _mm256_mul_pd(vt, _mm256_loadu_pd(online + i))));
    }
    for (; i < n; ++i) target[i] = keep * target[i] + tau * online[i];
}

constexpr KernelTable kAvx2{
    "avx2", dot, axpy, affine, accumulate_weight_grad, input_grad,
    relu,   relu_backward, adam, lerp,
};

}  // namespace

const KernelTable* avx2_kernels_unchecked() { return &kAvx2; }

}  // namespace d2q::simd
