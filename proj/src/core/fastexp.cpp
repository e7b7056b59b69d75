// Element-wise exp over a buffer of non-positive finite arguments. Kept in
// its own translation unit so the build can attach vector-math flags here
// without touching any code that handles NaN/Inf.

#include <cmath>
#include <cstddef>

namespace propsplat::kernel {

void exp_batch(const double* x, double* y, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

} // namespace propsplat::kernel
