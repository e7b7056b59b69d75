#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "core/model.hpp"
#include "core/rng.hpp"

namespace propsplat {

// One labeled link. target_db is path loss, or RSSI when the dataset is in
// RSSI mode (the trainer is told which via TrainConfig::rssi_mode).
struct Measurement {
    Vec3 tx;
    Vec3 rx;
    double frequency_hz = 0.0;
    double target_db = 0.0;
    double link_distance_m = 0.0;

    static Measurement make(const Vec3& tx, const Vec3& rx, double frequency_hz,
                            double target_db) {
        return {tx, rx, frequency_hz, target_db, norm(rx - tx)};
    }
};

struct TrainConfig {
    std::size_t n_gaussians = 9000;
    std::size_t iterations = 5000;
    std::size_t batch_size = 4096;  // capped at the dataset size

    // Per-group learning rates: positions live in meters, the other groups in
    // much smaller units.
    double lr_center = 0.5;
    double lr_log_scale = 0.01;
    double lr_rotation = 0.005;
    double lr_offset = 0.05;
    double lr_gamma = 0.002;
    double lr_p0 = 0.05;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    double weight_exponent = 1.0;  // p in (d + eps)^p
    double weight_eps_m = 1.0;

    double init_sigma0 = 0.3;         // scale fraction of median link distance
    double init_offset_std_db = 0.1;
    double gamma_init = 2.0;

    double scale_min_m = 0.1;
    double scale_max_m = 10000.0;
    double gamma_min = 0.5;
    double gamma_max = 6.0;

    bool no_gaussians = false;  // ablation: drop every primitive
    bool isotropic = false;     // ablation: one shared scale, frozen rotations
    bool fixed_ple = false;     // ablation: freeze gamma at gamma_init
    bool rssi_mode = false;

    std::uint64_t rng_seed = 0;
    int threads = 1;  // 1 = strict sequential (bit-reproducible)
};

// Gradients in the 11-per-primitive layout plus gamma and optional p0.
// Rotation gradients are ambient 4-vectors projected onto the tangent of the
// unit sphere, matching perturb-then-renormalize finite differences.
struct GradientSet {
    std::vector<Vec3> d_center;
    std::vector<Vec3> d_log_scale;
    std::vector<Quat> d_rotation;
    std::vector<double> d_offset;
    double d_gamma = 0.0;
    double d_p0 = 0.0;
    bool has_p0 = false;

    void resize(std::size_t n, bool with_p0);
    void zero();
    void add(const GradientSet& o);
    bool all_finite() const;
};

struct AdamState {
    GradientSet m;  // first moments
    GradientSet v;  // second moments (>= 0)
    std::int64_t step = 0;

    static AdamState make(std::size_t n, bool with_p0);
};

struct IterationStats {
    std::size_t iteration = 0;
    double loss = 0.0;
    double gamma = 0.0;
    double wall_s = 0.0;
};

using ProgressFn = std::function<void(const IterationStats&)>;

struct TrainResult {
    ModelState model;
    std::vector<IterationStats> history;
};

TrainConfig apply_ablation(TrainConfig config, bool no_gaussians, bool isotropic, bool fixed_ple);

ModelState initialize_model(std::span<const Measurement> dataset, const TrainConfig& config,
                            Rng& rng);

double weighted_loss(const ModelState& model, std::span<const Measurement> batch,
                     const TrainConfig& config);

std::pair<double, GradientSet> loss_gradients(const ModelState& model,
                                              std::span<const Measurement> batch,
                                              const TrainConfig& config);

// Max relative error between analytic gradients and central finite
// differences with step h. Quaternion coordinates are perturbed and then
// renormalized on both sides of the difference.
double finite_difference_check(const ModelState& model, std::span<const Measurement> batch,
                               const TrainConfig& config, double h);

void adam_step(ModelState& model, const GradientSet& grads, AdamState& state,
               const TrainConfig& config);

TrainResult train(std::span<const Measurement> dataset, const TrainConfig& config,
                  const ProgressFn& progress = {});

// Randomized scene for gradient verification: anisotropic scales,
// non-identity rotations, and a mix of relevant/irrelevant primitives whose
// projections stay clear of the gate boundary by `gate_margin`.
struct GradCheckScene {
    ModelState model;
    std::vector<Measurement> batch;
    TrainConfig config;
};
GradCheckScene make_gradcheck_scene(std::size_t n_gaussians, std::size_t batch_size,
                                    std::uint64_t seed, double gate_margin, bool rssi_mode);

// Worst finite_difference_check result over `trials` random scenes.
double gradcheck_sweep(std::size_t n_gaussians, std::size_t batch_size, std::size_t trials,
                       std::uint64_t seed, double h);

} // namespace propsplat
