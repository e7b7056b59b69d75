#include "core/kernel.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

namespace propsplat::kernel {

namespace {

// Primitives are processed in fixed-size blocks: one branch-free pass
// computes every lane's exponent (masked lanes get kMaskedArg and a zero
// coefficient), a batched exp covers the whole block, and a fixed 4-lane
// reduction folds coefficient * exp. Identical block layout in the sum and
// scan paths keeps their influence values bit-identical.
constexpr std::size_t kBlock = 512;
// exp(-700) ~ 1e-304: still a normal double, and far below the underflow
// floor, so masked lanes cost one multiply by a zero coefficient.
constexpr double kMaskedArg = -700.0;

struct Scratch {
    double args[kBlock];
    double exps[kBlock];
    double coef[kBlock];
    double along[kBlock];
    std::uint8_t state[kBlock];  // 0 = gated, 1 = relevant but underflowed, 2 = active
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

struct Ray {
    double ox, oy, oz;  // tx
    double ux, uy, uz;  // unit direction
    double d;           // span
};

Ray make_ray(const Vec3& tx, const Vec3& rx) {
    const Vec3 v = rx - tx;
    const double d = norm(v);
    const double inv = 1.0 / d;
    return {tx.x, tx.y, tx.z, v.x * inv, v.y * inv, v.z * inv, d};
}

// Exponent pass for lanes [lo, lo+n). Branch-free so it vectorizes.
void exponent_pass(const Prepared& p, const Ray& r, std::size_t lo, std::size_t n,
                   double* __restrict args, double* __restrict coef) {
    const double* __restrict cx = p.cx.data() + lo;
    const double* __restrict cy = p.cy.data() + lo;
    const double* __restrict cz = p.cz.data() + lo;
    const double* __restrict m00 = p.m00.data() + lo;
    const double* __restrict m10 = p.m10.data() + lo;
    const double* __restrict m20 = p.m20.data() + lo;
    const double* __restrict m01 = p.m01.data() + lo;
    const double* __restrict m11 = p.m11.data() + lo;
    const double* __restrict m21 = p.m21.data() + lo;
    const double* __restrict m02 = p.m02.data() + lo;
    const double* __restrict m12 = p.m12.data() + lo;
    const double* __restrict m22 = p.m22.data() + lo;
    const double* __restrict s2x = p.inv_s2x.data() + lo;
    const double* __restrict s2y = p.inv_s2y.data() + lo;
    const double* __restrict s2z = p.inv_s2z.data() + lo;
    const double* __restrict off = p.offset.data() + lo;
    const double* __restrict cr2 = p.cull_r2.data() + lo;

    for (std::size_t j = 0; j < n; ++j) {
        const double wx = cx[j] - r.ox;
        const double wy = cy[j] - r.oy;
        const double wz = cz[j] - r.oz;
        const double l = wx * r.ux + wy * r.uy + wz * r.uz;
        const double dx = l * r.ux - wx;
        const double dy = l * r.uy - wy;
        const double dz = l * r.uz - wz;
        const double a0 = m00[j] * dx + m10[j] * dy + m20[j] * dz;
        const double a1 = m01[j] * dx + m11[j] * dy + m21[j] * dz;
        const double a2 = m02[j] * dx + m12[j] * dy + m22[j] * dz;
        const double q = a0 * a0 * s2x[j] + a1 * a1 * s2y[j] + a2 * a2 * s2z[j];
        const double r2 = dx * dx + dy * dy + dz * dz;
        const double arg = -0.5 * q;
        const bool ok =
            (l > 0.0) & (l < r.d) & (arg >= kInfluenceExpFloor) & (r2 <= cr2[j]);
        args[j] = ok ? arg : kMaskedArg;
        coef[j] = ok ? off[j] : 0.0;
    }
}

// Same lane arithmetic as exponent_pass, plus per-lane gate state and the
// projection distance for trace construction.
void scan_pass(const Prepared& p, const Ray& r, std::size_t lo, std::size_t n,
               double* __restrict args, double* __restrict along, std::uint8_t* __restrict state) {
    const double* __restrict cx = p.cx.data() + lo;
    const double* __restrict cy = p.cy.data() + lo;
    const double* __restrict cz = p.cz.data() + lo;
    const double* __restrict m00 = p.m00.data() + lo;
    const double* __restrict m10 = p.m10.data() + lo;
    const double* __restrict m20 = p.m20.data() + lo;
    const double* __restrict m01 = p.m01.data() + lo;
    const double* __restrict m11 = p.m11.data() + lo;
    const double* __restrict m21 = p.m21.data() + lo;
    const double* __restrict m02 = p.m02.data() + lo;
    const double* __restrict m12 = p.m12.data() + lo;
    const double* __restrict m22 = p.m22.data() + lo;
    const double* __restrict s2x = p.inv_s2x.data() + lo;
    const double* __restrict s2y = p.inv_s2y.data() + lo;
    const double* __restrict s2z = p.inv_s2z.data() + lo;
    const double* __restrict cr2 = p.cull_r2.data() + lo;

    for (std::size_t j = 0; j < n; ++j) {
        const double wx = cx[j] - r.ox;
        const double wy = cy[j] - r.oy;
        const double wz = cz[j] - r.oz;
        const double l = wx * r.ux + wy * r.uy + wz * r.uz;
        const double dx = l * r.ux - wx;
        const double dy = l * r.uy - wy;
        const double dz = l * r.uz - wz;
        const double a0 = m00[j] * dx + m10[j] * dy + m20[j] * dz;
        const double a1 = m01[j] * dx + m11[j] * dy + m21[j] * dz;
        const double a2 = m02[j] * dx + m12[j] * dy + m22[j] * dz;
        const double q = a0 * a0 * s2x[j] + a1 * a1 * s2y[j] + a2 * a2 * s2z[j];
        const double r2 = dx * dx + dy * dy + dz * dz;
        const double arg = -0.5 * q;
        const bool rel = (l > 0.0) & (l < r.d) & (r2 <= cr2[j]);
        const bool ok = rel & (arg >= kInfluenceExpFloor);
        args[j] = ok ? arg : kMaskedArg;
        along[j] = l;
        state[j] = static_cast<std::uint8_t>(static_cast<int>(rel) + static_cast<int>(ok));
    }
}

} // namespace

Prepared prepare(const ModelState& m, double cull_k) {
    Prepared p;
    p.n = m.gaussians.size();
    const std::size_t n = p.n;
    for (auto* v : {&p.cx, &p.cy, &p.cz, &p.m00, &p.m10, &p.m20, &p.m01, &p.m11, &p.m21,
                    &p.m02, &p.m12, &p.m22, &p.inv_s2x, &p.inv_s2y, &p.inv_s2z, &p.offset,
                    &p.cull_r2})
        v->resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPrimitive& g = m.gaussians[i];
        const Mat3 r = rotation_matrix(g.rotation);
        const double sx = std::exp(g.log_scale.x);
        const double sy = std::exp(g.log_scale.y);
        const double sz = std::exp(g.log_scale.z);
        p.cx[i] = g.center.x;
        p.cy[i] = g.center.y;
        p.cz[i] = g.center.z;
        p.m00[i] = r.m[0][0];
        p.m10[i] = r.m[1][0];
        p.m20[i] = r.m[2][0];
        p.m01[i] = r.m[0][1];
        p.m11[i] = r.m[1][1];
        p.m21[i] = r.m[2][1];
        p.m02[i] = r.m[0][2];
        p.m12[i] = r.m[1][2];
        p.m22[i] = r.m[2][2];
        p.inv_s2x[i] = 1.0 / (sx * sx);
        p.inv_s2y[i] = 1.0 / (sy * sy);
        p.inv_s2z[i] = 1.0 / (sz * sz);
        p.offset[i] = g.offset_db;
        if (cull_k > 0.0) {
            const double smax = std::max(sx, std::max(sy, sz));
            p.cull_r2[i] = (cull_k * smax) * (cull_k * smax);
        } else {
            p.cull_r2[i] = std::numeric_limits<double>::infinity();
        }
    }
    return p;
}

namespace {

// Contribution of lanes [lo, lo+n) to one query: pass A, batched exp, and a
// 4-lane fold. The fold is reduced per block; totals add block sums in
// block order, a fixed scheme shared by the single and batched paths.
double block_sum(const Prepared& p, const Ray& r, std::size_t lo, std::size_t n, Scratch& s) {
    exponent_pass(p, r, lo, n, s.args, s.coef);
    exp_batch(s.args, s.exps, n);
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        acc0 += s.coef[j + 0] * s.exps[j + 0];
        acc1 += s.coef[j + 1] * s.exps[j + 1];
        acc2 += s.coef[j + 2] * s.exps[j + 2];
        acc3 += s.coef[j + 3] * s.exps[j + 3];
    }
    for (; j < n; ++j) acc0 += s.coef[j] * s.exps[j];
    return (acc0 + acc1) + (acc2 + acc3);
}

} // namespace

double accumulate_offset(const Prepared& p, const Vec3& tx, const Vec3& rx) {
    Scratch& s = scratch();
    const Ray r = make_ray(tx, rx);
    double total = 0.0;
    for (std::size_t lo = 0; lo < p.n; lo += kBlock) {
        const std::size_t n = std::min(kBlock, p.n - lo);
        total += block_sum(p, r, lo, n, s);
    }
    return total;
}

void accumulate_offset_batch(const Prepared& p, const Vec3* tx, const Vec3* rx, std::size_t nq,
                             double* out) {
    Scratch& s = scratch();
    std::vector<Ray> rays;
    rays.reserve(nq);
    for (std::size_t i = 0; i < nq; ++i) rays.push_back(make_ray(tx[i], rx[i]));
    for (std::size_t i = 0; i < nq; ++i) out[i] = 0.0;

    for (std::size_t lo = 0; lo < p.n; lo += kBlock) {
        const std::size_t n = std::min(kBlock, p.n - lo);
        for (std::size_t i = 0; i < nq; ++i) out[i] += block_sum(p, rays[i], lo, n, s);
    }
}

double fold_contributions(const double* c, std::size_t n, std::size_t skip_index) {
    thread_local std::vector<double> seq;
    seq.clear();
    seq.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (i != skip_index) seq.push_back(c[i]);

    double total = 0.0;
    for (std::size_t lo = 0; lo < seq.size(); lo += kBlock) {
        const std::size_t nb = std::min(kBlock, seq.size() - lo);
        const double* s = seq.data() + lo;
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        std::size_t j = 0;
        for (; j + 4 <= nb; j += 4) {
            a0 += s[j];
            a1 += s[j + 1];
            a2 += s[j + 2];
            a3 += s[j + 3];
        }
        for (; j < nb; ++j) a0 += s[j];
        total += (a0 + a1) + (a2 + a3);
    }
    return total;
}

void influence_scan(const Prepared& p, const Vec3& tx, const Vec3& rx,
                    std::vector<ScanEntry>& out) {
    Scratch& s = scratch();
    const Ray r = make_ray(tx, rx);

    out.clear();
    for (std::size_t lo = 0; lo < p.n; lo += kBlock) {
        const std::size_t n = std::min(kBlock, p.n - lo);
        scan_pass(p, r, lo, n, s.args, s.along, s.state);
        exp_batch(s.args, s.exps, n);
        for (std::size_t j = 0; j < n; ++j) {
            if (s.state[j] == 0) continue;
            const double a = s.state[j] == 2 ? s.exps[j] : 0.0;
            out.push_back({lo + j, s.along[j], a});
        }
    }
}

} // namespace propsplat::kernel
