#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "core/geometry.hpp"

namespace propsplat {

enum class ValueKind { path_loss, rssi };

// One learnable primitive: 11 scalars (center 3, log-scale 3, rotation 4,
// offset 1). A positive offset adds loss on links the primitive influences,
// a negative one removes it.
struct GaussianPrimitive {
    Vec3 center;
    Vec3 log_scale;  // log-meters per local axis
    Quat rotation;
    double offset_db = 0.0;
};

// A trained (or freshly initialized) model. Bound to a single frequency;
// p0_dbm is set exactly in RSSI mode, where predictions are P0 - PL.
struct ModelState {
    std::vector<GaussianPrimitive> gaussians;
    double ple = 2.0;  // path-loss exponent
    std::optional<double> p0_dbm;
    double frequency_hz = 0.0;
    std::optional<std::array<double, 2>> origin_latlon;  // projection origin, if geodetic

    ValueKind kind() const { return p0_dbm ? ValueKind::rssi : ValueKind::path_loss; }
};

struct LinkQuery {
    Vec3 tx;
    Vec3 rx;
    double frequency_hz = 0.0;
};

struct TraceEntry {
    std::size_t index;        // position in ModelState::gaussians
    double along_m;           // projection distance from tx
    double influence;         // in [0, 1]
    double contribution_db;   // offset_db * influence
};
using ContributionTrace = std::vector<TraceEntry>;

struct PredictOptions {
    int threads = 1;
    // Skip primitives whose center is farther than cull_k * max(scale) from
    // the segment. Off by default; invariant and acceptance tests keep it off
    // so leave-one-out additivity stays exact.
    bool cull = false;
    double cull_k = 6.0;
};

// Distance clamp for the baseline term.
inline constexpr double kMinBaselineDistanceM = 1.0;
// Influence exponents below this underflow to exactly zero. Keeps
// offset * influence sign-exact instead of rounding subnormals to +-0.
inline constexpr double kInfluenceExpFloor = -700.0;

double influence(const GaussianPrimitive& g, const Vec3& tx, const Vec3& rx);
double path_loss_offset(const ModelState& m, const Vec3& tx, const Vec3& rx);
double baseline_path_loss(const Vec3& tx, const Vec3& rx, double frequency_hz, double ple);
double predict(const ModelState& m, const LinkQuery& q);
ContributionTrace contribution_trace(const ModelState& m, const LinkQuery& q);
std::vector<double> predict_batch(const ModelState& m, std::span<const LinkQuery> queries,
                                  const PredictOptions& opts = {});

} // namespace propsplat
