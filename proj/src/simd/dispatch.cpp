#include "d2q/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace d2q::simd {

#if defined(D2Q_HAVE_AVX2)
const KernelTable* avx2_kernels_unchecked();
#endif

const KernelTable* avx2_kernels() {
#if defined(D2Q_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? avx2_kernels_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* initial_selection() {
    if (const char* env = std::getenv("D2Q_KERNELS"); env != nullptr && std::string_view(env) == "scalar")
        return &scalar_kernels();
    if (const KernelTable* k = avx2_kernels()) return k;
    return &scalar_kernels();
}

const KernelTable*& current() {
    static const KernelTable* table = initial_selection();
    return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

bool select(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            current() = &scalar_kernels();
            return true;
        case Isa::Avx2:
            if (const KernelTable* k = avx2_kernels()) {
                current() = k;
                return true;
            }
            return false;
    }
    return false;
}

}  // namespace d2q::simd
