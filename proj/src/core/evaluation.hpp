#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace propsplat {

struct MetricReport {
    double mae_db = 0.0;
    double rmse_db = 0.0;
    double median_abs_err_db = 0.0;
    double p95_abs_err_db = 0.0;  // nearest-rank
    std::size_t count = 0;
};

MetricReport error_metrics(std::span<const double> predictions, std::span<const double> truths);

// Square raster of predictions centered on the Tx (the center cell sits
// exactly on it). offset_only rasters hold the offset field minus its
// spatial mean instead of total path loss.
struct CoverageRaster {
    double origin_x = 0.0;  // center of cell (0, 0)
    double origin_y = 0.0;
    double cell_m = 0.0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;  // row-major, row 0 at origin_y
    Vec3 tx;
    double frequency_hz = 0.0;
    double rx_z_m = 0.0;
    bool offset_only = false;

    double at(std::size_t ix, std::size_t iy) const { return values[iy * width + ix]; }
};

CoverageRaster coverage_grid(const ModelState& model, const Vec3& tx, double extent_m,
                             double cell_m, double rx_z_m, bool offset_only, int threads = 1);

// Flat f64 binary plus a text sidecar (<prefix>.bin / <prefix>.hdr).
void write_raster(const CoverageRaster& r, const std::string& path_prefix);
void write_raster_csv(const CoverageRaster& r, const std::string& path);

struct GridSpec {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double spacing_m = 0.25;
    double z_m = 1.0;  // beacon height of the hypothetical transmitter
};

struct FingerprintDB {
    std::vector<Vec3> positions;          // grid transmitter positions
    std::vector<Vec3> gateway_positions;  // length G
    std::vector<double> rssi;             // positions.size() x G, row-major per position

    std::size_t gateway_count() const { return gateway_positions.size(); }
};

FingerprintDB build_fingerprint_db(std::span<const ModelState> gateway_models,
                                   std::span<const Vec3> gateway_positions, const GridSpec& grid,
                                   int threads = 1);

// KNN in RSSI space with NaN entries masked out of the distance. Ties break
// toward the lower grid index; the estimate is the unweighted centroid of
// the k nearest grid positions. masked_out, when given, receives the number
// of masked dimensions.
Vec3 knn_localize(const FingerprintDB& db, std::span<const double> observed, std::size_t k,
                  std::size_t* masked_out = nullptr);

struct LocalizationReport {
    double mean_m = 0.0;
    double median_m = 0.0;
    std::size_t count = 0;
};

LocalizationReport localization_report(std::span<const Vec3> estimates,
                                       std::span<const Vec3> truths, bool horizontal_only);

struct DiagnosticsReport {
    double max_additivity_error_db = 0.0;
    double sign_consistency_rate = 1.0;
    std::size_t sign_pairs = 0;  // 0 flags a vacuous sign set
};

// Leave-one-out additivity and offset-sign consistency over a query sweep.
DiagnosticsReport diagnostics(const ModelState& model, std::span<const LinkQuery> queries);

} // namespace propsplat
