#pragma once

#include <cstddef>
#include <vector>

#include "core/model.hpp"

// Internal prediction kernel. All influence sums in the library route
// through accumulate_offset / influence_scan so that single-query,
// batched, and traced paths produce bit-identical values.

namespace propsplat::kernel {

// Structure-of-arrays snapshot of the primitives. cull_r2 is +inf when
// culling is disabled, which removes the branch from the hot pass.
struct Prepared {
    std::size_t n = 0;
    std::vector<double> cx, cy, cz;                      // centers
    std::vector<double> m00, m10, m20, m01, m11, m21, m02, m12, m22;  // rotation, row-major
    std::vector<double> inv_s2x, inv_s2y, inv_s2z;       // 1 / scale^2
    std::vector<double> offset;
    std::vector<double> cull_r2;                         // (cull_k * max scale)^2
};

Prepared prepare(const ModelState& m, double cull_k = 0.0);

struct ScanEntry {
    std::size_t index;
    double along_m;
    double influence;
};

// Sum of offset * influence over all primitives; fixed deterministic
// block/lane accumulation order.
double accumulate_offset(const Prepared& p, const Vec3& tx, const Vec3& rx);

// Batched form: out[i] = offset sum for (tx[i], rx[i]). Iterates primitive
// blocks in the outer loop so the model streams from memory once per call
// instead of once per query. Per-query arithmetic is identical to
// accumulate_offset.
void accumulate_offset_batch(const Prepared& p, const Vec3* tx, const Vec3* rx, std::size_t nq,
                             double* out);

// Influences of every relevant primitive (influence may be 0 after
// underflow), in index order. Computes the same values accumulate_offset
// sums.
void influence_scan(const Prepared& p, const Vec3& tx, const Vec3& rx,
                    std::vector<ScanEntry>& out);

// y[i] = exp(x[i]). Inputs must be finite and <= 0.
void exp_batch(const double* x, double* y, std::size_t n);

// Folds per-primitive contributions with exactly the accumulation structure
// accumulate_offset uses, optionally skipping one index. Given the
// contributions a model produces for a query, fold_contributions(c, i) is
// bit-identical to what accumulate_offset returns for the model with
// primitive i removed (contributions are independent, so the remaining
// values and the fold structure are unchanged).
double fold_contributions(const double* c, std::size_t n, std::size_t skip_index);

} // namespace propsplat::kernel
