#include "core/synth.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "core/errors.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"

namespace propsplat {

bool segment_hits_box(const Vec3& a, const Vec3& b, const BoxObstacle& box) {
    // Slab test on the open parameter interval (0, 1). Rays parallel to a
    // slab must lie strictly inside it to pass.
    double t_enter = 0.0, t_exit = 1.0;
    const double av[3] = {a.x, a.y, a.z};
    const double bv[3] = {b.x, b.y, b.z};
    const double lo[3] = {box.min.x, box.min.y, box.min.z};
    const double hi[3] = {box.max.x, box.max.y, box.max.z};

    for (int k = 0; k < 3; ++k) {
        const double d = bv[k] - av[k];
        if (d == 0.0) {
            if (!(av[k] > lo[k] && av[k] < hi[k])) return false;
            continue;
        }
        double t1 = (lo[k] - av[k]) / d;
        double t2 = (hi[k] - av[k]) / d;
        if (t1 > t2) std::swap(t1, t2);
        t_enter = std::max(t_enter, t1);
        t_exit = std::min(t_exit, t2);
        if (t_enter >= t_exit) return false;  // open overlap required
    }
    return t_enter < t_exit;
}

bool segment_hits_sphere(const Vec3& a, const Vec3& b, const SphereObstacle& s) {
    const Vec3 d = b - a;
    const Vec3 m = a - s.center;
    const double A = dot(d, d);
    const double B = 2.0 * dot(m, d);
    const double C = dot(m, m) - s.radius * s.radius;
    const double disc = B * B - 4.0 * A * C;
    if (disc <= 0.0) return false;  // tangent does not enter the open interior
    const double sq = std::sqrt(disc);
    const double t1 = (-B - sq) / (2.0 * A);
    const double t2 = (-B + sq) / (2.0 * A);
    return std::max(t1, 0.0) < std::min(t2, 1.0);
}

double oracle_path_loss(const ObstacleWorld& w, const Vec3& tx, const Vec3& rx,
                        double frequency_hz) {
    require(norm2(rx - tx) > 0.0, ErrorCode::invalid_argument,
            "degenerate link: tx and rx coincide");
    double pl = baseline_path_loss(tx, rx, frequency_hz, w.ple_true);
    for (const BoxObstacle& b : w.boxes)
        if (segment_hits_box(tx, rx, b)) pl += b.loss_db;
    for (const SphereObstacle& s : w.spheres)
        if (segment_hits_sphere(tx, rx, s)) pl += s.loss_db;
    return pl;
}

std::vector<Measurement> generate_drive_test(const ObstacleWorld& w, const RouteSpec& route,
                                             const Vec3& tx, double frequency_hz,
                                             std::uint64_t seed) {
    require(route.spacing_m > 0.0, ErrorCode::invalid_argument, "sample spacing must be > 0");
    require(route.waypoints.size() >= 2, ErrorCode::invalid_argument,
            "route needs at least two waypoints");

    double total = 0.0;
    for (std::size_t i = 1; i < route.waypoints.size(); ++i)
        total += norm(route.waypoints[i] - route.waypoints[i - 1]);
    require(total > 0.0, ErrorCode::invalid_argument, "degenerate route: zero length");

    // Sample positions at arc length i * spacing, walking the polyline.
    std::vector<Vec3> positions;
    const std::size_t count = static_cast<std::size_t>(std::floor(total / route.spacing_m)) + 1;
    positions.reserve(count);
    std::size_t leg = 1;
    double leg_start = 0.0;
    double leg_len = norm(route.waypoints[1] - route.waypoints[0]);
    for (std::size_t i = 0; i < count; ++i) {
        const double s = static_cast<double>(i) * route.spacing_m;
        while (s > leg_start + leg_len && leg + 1 < route.waypoints.size()) {
            leg_start += leg_len;
            ++leg;
            leg_len = norm(route.waypoints[leg] - route.waypoints[leg - 1]);
        }
        const double t = leg_len > 0.0 ? std::min((s - leg_start) / leg_len, 1.0) : 0.0;
        positions.push_back(route.waypoints[leg - 1] +
                            t * (route.waypoints[leg] - route.waypoints[leg - 1]));
    }

    const Rng base(seed);
    std::vector<Measurement> out;
    out.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (norm2(positions[i] - tx) == 0.0) continue;  // rover drove over the mast
        double pl = oracle_path_loss(w, tx, positions[i], frequency_hz);
        if (w.shadow_sigma_db > 0.0) {
            Rng stream = base.stream(i);
            pl += stream.normal() * w.shadow_sigma_db;
        }
        out.push_back(Measurement::make(tx, positions[i], frequency_hz, pl));
    }
    return out;
}

std::vector<std::vector<Measurement>> generate_indoor_grid(const ObstacleWorld& w,
                                                           const IndoorGridSpec& grid,
                                                           const std::vector<Vec3>& gateways,
                                                           double frequency_hz, double p0_true,
                                                           std::uint64_t seed) {
    require(grid.spacing_m > 0.0, ErrorCode::invalid_argument, "grid spacing must be > 0");
    require(!gateways.empty(), ErrorCode::invalid_argument, "need at least one gateway");
    require(grid.x1 >= grid.x0 && grid.y1 >= grid.y0, ErrorCode::invalid_argument,
            "grid extent is inverted");

    std::vector<Vec3> positions;
    const auto nx = static_cast<std::size_t>(std::floor((grid.x1 - grid.x0) / grid.spacing_m +
                                                        1e-9)) + 1;
    const auto ny = static_cast<std::size_t>(std::floor((grid.y1 - grid.y0) / grid.spacing_m +
                                                        1e-9)) + 1;
    for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix)
            positions.push_back({grid.x0 + static_cast<double>(ix) * grid.spacing_m,
                                 grid.y0 + static_cast<double>(iy) * grid.spacing_m,
                                 grid.tx_z_m});

    const Rng base(seed);
    std::vector<std::vector<Measurement>> out(gateways.size());
    for (std::size_t g = 0; g < gateways.size(); ++g) {
        out[g].reserve(positions.size());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (norm2(positions[i] - gateways[g]) == 0.0) continue;
            double pl = oracle_path_loss(w, positions[i], gateways[g], frequency_hz);
            if (w.shadow_sigma_db > 0.0) {
                Rng stream = base.stream(g * positions.size() + i);
                pl += stream.normal() * w.shadow_sigma_db;
            }
            out[g].push_back(
                Measurement::make(positions[i], gateways[g], frequency_hz, p0_true - pl));
        }
    }
    return out;
}

ObstacleWorld parse_world(std::istream& in) {
    ObstacleWorld w;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;

        auto want = [&](double& v, const char* what) {
            require(static_cast<bool>(ls >> v) && std::isfinite(v), ErrorCode::parse,
                    "world line " + std::to_string(line_no) + ": expected " + what);
        };

        if (tok == "ple") {
            want(w.ple_true, "path-loss exponent");
            require(w.ple_true > 0, ErrorCode::parse,
                    "world line " + std::to_string(line_no) + ": ple must be > 0");
        } else if (tok == "sigma_noise") {
            want(w.shadow_sigma_db, "noise sigma");
            require(w.shadow_sigma_db >= 0, ErrorCode::parse,
                    "world line " + std::to_string(line_no) + ": sigma_noise must be >= 0");
        } else if (tok == "seed") {
            double s;
            want(s, "seed");
            w.seed = static_cast<std::uint64_t>(s);
        } else if (tok == "box") {
            BoxObstacle b;
            want(b.min.x, "min x");
            want(b.min.y, "min y");
            want(b.min.z, "min z");
            want(b.max.x, "max x");
            want(b.max.y, "max y");
            want(b.max.z, "max z");
            want(b.loss_db, "loss dB");
            require(b.max.x > b.min.x && b.max.y > b.min.y && b.max.z > b.min.z,
                    ErrorCode::parse,
                    "world line " + std::to_string(line_no) + ": degenerate box");
            w.boxes.push_back(b);
        } else if (tok == "sphere") {
            SphereObstacle s;
            want(s.center.x, "center x");
            want(s.center.y, "center y");
            want(s.center.z, "center z");
            want(s.radius, "radius");
            want(s.loss_db, "loss dB");
            require(s.radius > 0, ErrorCode::parse,
                    "world line " + std::to_string(line_no) + ": degenerate sphere");
            w.spheres.push_back(s);
        } else {
            fail(ErrorCode::parse,
                 "world line " + std::to_string(line_no) + ": unknown directive '" + tok + "'");
        }
    }
    return w;
}

ObstacleWorld read_world(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot open '" + path + "' for reading");
    return parse_world(in);
}

void write_world(const ObstacleWorld& w, std::ostream& out) {
    out << std::setprecision(17);
    out << "ple " << w.ple_true << "\n";
    out << "sigma_noise " << w.shadow_sigma_db << "\n";
    out << "seed " << w.seed << "\n";
    for (const BoxObstacle& b : w.boxes)
        out << "box " << b.min.x << ' ' << b.min.y << ' ' << b.min.z << ' ' << b.max.x << ' '
            << b.max.y << ' ' << b.max.z << ' ' << b.loss_db << "\n";
    for (const SphereObstacle& s : w.spheres)
        out << "sphere " << s.center.x << ' ' << s.center.y << ' ' << s.center.z << ' '
            << s.radius << ' ' << s.loss_db << "\n";
}

} // namespace propsplat
