#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "core/geometry.hpp"
#include "core/training.hpp"

namespace propsplat {

struct BoxObstacle {
    Vec3 min;
    Vec3 max;
    double loss_db = 0.0;
};

struct SphereObstacle {
    Vec3 center;
    double radius = 0.0;
    double loss_db = 0.0;
};

// Ground-truth environment: log-distance baseline with a known exponent plus
// a constant dB loss per obstacle whose open interior the link crosses.
struct ObstacleWorld {
    std::vector<BoxObstacle> boxes;
    std::vector<SphereObstacle> spheres;
    double ple_true = 2.0;
    double shadow_sigma_db = 0.0;
    std::uint64_t seed = 0;
};

// Open-interval tests: grazing a face or being tangent does not count.
bool segment_hits_box(const Vec3& a, const Vec3& b, const BoxObstacle& box);
bool segment_hits_sphere(const Vec3& a, const Vec3& b, const SphereObstacle& s);

// Noise-free ground truth; generators add shadow noise from per-sample
// derived streams so labels stay deterministic under any evaluation order.
double oracle_path_loss(const ObstacleWorld& w, const Vec3& tx, const Vec3& rx,
                        double frequency_hz);

struct RouteSpec {
    std::vector<Vec3> waypoints;
    double spacing_m = 0.0;
};

std::vector<Measurement> generate_drive_test(const ObstacleWorld& w, const RouteSpec& route,
                                             const Vec3& tx, double frequency_hz,
                                             std::uint64_t seed);

struct IndoorGridSpec {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double spacing_m = 1.0;
    double tx_z_m = 1.0;  // beacon height at every grid position
};

// One RSSI dataset per gateway: for each grid position p and gateway g,
// RSSI = p0_true - oracle loss on the (p, gateway) link.
std::vector<std::vector<Measurement>> generate_indoor_grid(const ObstacleWorld& w,
                                                           const IndoorGridSpec& grid,
                                                           const std::vector<Vec3>& gateways,
                                                           double frequency_hz, double p0_true,
                                                           std::uint64_t seed);

// World file: '#' comments, header keys (ple, sigma_noise, seed), then one
// obstacle per line. Grammar documented in docs/FORMATS.md.
ObstacleWorld parse_world(std::istream& in);
ObstacleWorld read_world(const std::string& path);
void write_world(const ObstacleWorld& w, std::ostream& out);

} // namespace propsplat
