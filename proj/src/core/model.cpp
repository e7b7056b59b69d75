#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "core/errors.hpp"
#include "core/kernel.hpp"

namespace propsplat {

namespace {

constexpr double kSpeedOfLightMps = 299792458.0;

void check_link(const Vec3& tx, const Vec3& rx) {
    require(finite(tx) && finite(rx), ErrorCode::invalid_argument,
            "link endpoints must be finite");
    require(norm2(rx - tx) > 0.0, ErrorCode::invalid_argument,
            "degenerate link: tx and rx coincide");
}

void check_query(const ModelState& m, const LinkQuery& q) {
    check_link(q.tx, q.rx);
    require(q.frequency_hz > 0.0, ErrorCode::invalid_argument, "query frequency must be > 0");
    if (q.frequency_hz != m.frequency_hz) {
        fail(ErrorCode::mismatch,
             "query frequency " + std::to_string(q.frequency_hz) +
                 " Hz does not match model frequency " + std::to_string(m.frequency_hz) + " Hz");
    }
}

} // namespace

double influence(const GaussianPrimitive& g, const Vec3& tx, const Vec3& rx) {
    const SegmentProjection pr = project_onto_segment(tx, rx, g.center);
    if (!pr.relevant) return 0.0;

    const Vec3 local = world_to_local(pr.perp, g.rotation);
    const double sx = std::exp(g.log_scale.x);
    const double sy = std::exp(g.log_scale.y);
    const double sz = std::exp(g.log_scale.z);
    const double q = local.x * local.x / (sx * sx) + local.y * local.y / (sy * sy) +
                     local.z * local.z / (sz * sz);
    const double arg = -0.5 * q;
    if (arg < kInfluenceExpFloor) return 0.0;
    return std::exp(arg);
}

double path_loss_offset(const ModelState& m, const Vec3& tx, const Vec3& rx) {
    check_link(tx, rx);
    const kernel::Prepared p = kernel::prepare(m);
    return kernel::accumulate_offset(p, tx, rx);
}

double baseline_path_loss(const Vec3& tx, const Vec3& rx, double frequency_hz, double ple) {
    require(frequency_hz > 0.0, ErrorCode::invalid_argument, "frequency must be > 0");
    static const double kFsplConstant = 20.0 * std::log10(4.0 * kPi / kSpeedOfLightMps);
    const double d = std::max(norm(rx - tx), kMinBaselineDistanceM);
    return 20.0 * std::log10(frequency_hz) + 10.0 * ple * std::log10(d) + kFsplConstant;
}

double predict(const ModelState& m, const LinkQuery& q) {
    check_query(m, q);
    const kernel::Prepared p = kernel::prepare(m);
    const double pl = baseline_path_loss(q.tx, q.rx, q.frequency_hz, m.ple) +
                      kernel::accumulate_offset(p, q.tx, q.rx);
    return m.p0_dbm ? *m.p0_dbm - pl : pl;
}

ContributionTrace contribution_trace(const ModelState& m, const LinkQuery& q) {
    check_query(m, q);
    const kernel::Prepared p = kernel::prepare(m);
    std::vector<kernel::ScanEntry> scan;
    kernel::influence_scan(p, q.tx, q.rx, scan);

    ContributionTrace trace;
    trace.reserve(scan.size());
    for (const auto& e : scan)
        trace.push_back({e.index, e.along_m, e.influence, m.gaussians[e.index].offset_db * e.influence});
    std::stable_sort(trace.begin(), trace.end(),
                     [](const TraceEntry& a, const TraceEntry& b) { return a.along_m < b.along_m; });
    return trace;
}

std::vector<double> predict_batch(const ModelState& m, std::span<const LinkQuery> queries,
                                  const PredictOptions& opts) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            check_query(m, queries[i]);
        } catch (const Error& e) {
            fail(e.code(), "query " + std::to_string(i) + ": " + e.what());
        }
    }

    const kernel::Prepared p = kernel::prepare(m, opts.cull ? opts.cull_k : 0.0);
    const std::size_t total = queries.size();
    std::vector<Vec3> txs(total), rxs(total);
    for (std::size_t i = 0; i < total; ++i) {
        txs[i] = queries[i].tx;
        rxs[i] = queries[i].rx;
    }
    std::vector<double> out(total);

    auto run = [&](std::size_t lo, std::size_t hi) {
        kernel::accumulate_offset_batch(p, txs.data() + lo, rxs.data() + lo, hi - lo,
                                        out.data() + lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const LinkQuery& q = queries[i];
            const double pl =
                baseline_path_loss(q.tx, q.rx, q.frequency_hz, m.ple) + out[i];
            out[i] = m.p0_dbm ? *m.p0_dbm - pl : pl;
        }
    };

    const std::size_t n = queries.size();
    std::size_t workers = opts.threads <= 1 ? 1 : static_cast<std::size_t>(opts.threads);
    workers = std::min(workers, n == 0 ? std::size_t{1} : n);
    if (workers <= 1) {
        run(0, n);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t t = 0; t < workers; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

} // namespace propsplat
