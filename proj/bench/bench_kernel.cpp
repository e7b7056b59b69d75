// Throwaway micro-benchmark for the prediction kernel (not part of the build).
#include "core/kernel.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"
#include <chrono>
#include <cstdio>
using namespace propsplat;
int main() {
    Rng rng(7);
    ModelState m;
    m.frequency_hz = 2.4e9;
    const std::size_t N = 9000;
    m.gaussians.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        GaussianPrimitive g;
        g.center = {rng.uniform(-2000, 2000), rng.uniform(-2000, 2000), rng.uniform(0, 30)};
        g.log_scale = {std::log(rng.uniform(5, 60)), std::log(rng.uniform(5, 60)), std::log(rng.uniform(5, 60))};
        double ax = rng.normal(), ay = rng.normal(), az = rng.normal(), aw = rng.normal();
        double n = std::sqrt(ax*ax+ay*ay+az*az+aw*aw);
        g.rotation = {aw/n, ax/n, ay/n, az/n};
        g.offset_db = rng.normal() * 3;
        m.gaussians.push_back(g);
    }
    const std::size_t Q = 20000;
    std::vector<LinkQuery> qs(Q);
    for (auto& q : qs) {
        q.tx = {0, 0, 17};
        q.rx = {rng.uniform(-2000, 2000), rng.uniform(-2000, 2000), 1.5};
        q.frequency_hz = 2.4e9;
    }
    // relevance fraction
    auto p = kernel::prepare(m);
    std::vector<kernel::ScanEntry> scan;
    std::size_t rel = 0;
    for (int i = 0; i < 50; ++i) { kernel::influence_scan(p, qs[i].tx, qs[i].rx, scan); rel += scan.size(); }
    std::printf("avg relevant: %.0f / %zu\n", rel / 50.0, N);
    PredictOptions opts; opts.threads = 1;
    auto t0 = std::chrono::steady_clock::now();
    auto out = predict_batch(m, qs, opts);
    auto t1 = std::chrono::steady_clock::now();
    double s = std::chrono::duration<double>(t1 - t0).count();
    double sum = 0; for (double v : out) sum += v;
    std::printf("%zu predictions in %.3f s -> %.0f pred/s (checksum %.3f)\n", Q, s, Q / s, sum);
    return 0;
}
