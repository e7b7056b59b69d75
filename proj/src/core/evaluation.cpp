#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include "core/errors.hpp"
#include "core/kernel.hpp"

namespace propsplat {

namespace {

double median_of_sorted(const std::vector<double>& v) {
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

MetricReport error_metrics(std::span<const double> predictions, std::span<const double> truths) {
    require(predictions.size() == truths.size(), ErrorCode::invalid_argument,
            "prediction/truth length mismatch");
    require(!predictions.empty(), ErrorCode::invalid_argument, "metrics over empty input");

    std::vector<double> abs_err(predictions.size());
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - truths[i];
        abs_err[i] = std::abs(e);
        sum += abs_err[i];
        sum2 += e * e;
    }
    std::sort(abs_err.begin(), abs_err.end());

    MetricReport r;
    r.count = predictions.size();
    r.mae_db = sum / static_cast<double>(r.count);
    r.rmse_db = std::sqrt(sum2 / static_cast<double>(r.count));
    r.median_abs_err_db = median_of_sorted(abs_err);
    const std::size_t rank =
        static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(r.count)));
    r.p95_abs_err_db = abs_err[std::max<std::size_t>(rank, 1) - 1];
    return r;
}

CoverageRaster coverage_grid(const ModelState& model, const Vec3& tx, double extent_m,
                             double cell_m, double rx_z_m, bool offset_only, int threads) {
    require(extent_m > 0 && cell_m > 0, ErrorCode::invalid_argument,
            "extent and cell size must be > 0");
    require(model.frequency_hz > 0, ErrorCode::invalid_argument,
            "model has no frequency; cannot rasterize");

    const auto half = static_cast<std::size_t>(std::ceil(extent_m / cell_m));
    CoverageRaster r;
    r.cell_m = cell_m;
    r.width = r.height = 2 * half + 1;
    r.origin_x = tx.x - static_cast<double>(half) * cell_m;
    r.origin_y = tx.y - static_cast<double>(half) * cell_m;
    r.tx = tx;
    r.frequency_hz = model.frequency_hz;
    r.rx_z_m = rx_z_m;
    r.offset_only = offset_only;
    r.values.assign(r.width * r.height, std::numeric_limits<double>::quiet_NaN());

    // A cell whose center coincides with the Tx has no defined link; it
    // stays no-data.
    std::vector<LinkQuery> queries;
    std::vector<std::size_t> cell_of_query;
    queries.reserve(r.values.size());
    for (std::size_t iy = 0; iy < r.height; ++iy) {
        for (std::size_t ix = 0; ix < r.width; ++ix) {
            const Vec3 rx{r.origin_x + static_cast<double>(ix) * cell_m,
                          r.origin_y + static_cast<double>(iy) * cell_m, rx_z_m};
            if (rx == tx) continue;
            queries.push_back({tx, rx, model.frequency_hz});
            cell_of_query.push_back(iy * r.width + ix);
        }
    }

    PredictOptions opts;
    opts.threads = threads;
    const std::vector<double> pred = predict_batch(model, queries, opts);

    if (!offset_only) {
        for (std::size_t i = 0; i < pred.size(); ++i) r.values[cell_of_query[i]] = pred[i];
        return r;
    }

    // Offset field: prediction minus baseline (undoing the RSSI transform
    // when present), then minus the spatial mean.
    double mean = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const LinkQuery& q = queries[i];
        const double base = baseline_path_loss(q.tx, q.rx, q.frequency_hz, model.ple);
        const double pl = model.p0_dbm ? *model.p0_dbm - pred[i] : pred[i];
        const double offset = pl - base;
        r.values[cell_of_query[i]] = offset;
        mean += offset;
    }
    mean /= static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) r.values[cell_of_query[i]] -= mean;
    return r;
}

void write_raster(const CoverageRaster& r, const std::string& path_prefix) {
    {
        std::ofstream bin(path_prefix + ".bin", std::ios::binary);
        require(bin.good(), ErrorCode::io, "cannot open '" + path_prefix + ".bin' for writing");
        bin.write(reinterpret_cast<const char*>(r.values.data()),
                  static_cast<std::streamsize>(r.values.size() * sizeof(double)));
        require(bin.good(), ErrorCode::io, "write to '" + path_prefix + ".bin' failed");
    }
    std::ofstream hdr(path_prefix + ".hdr");
    require(hdr.good(), ErrorCode::io, "cannot open '" + path_prefix + ".hdr' for writing");
    hdr << std::setprecision(17);
    hdr << "ncols " << r.width << "\n"
        << "nrows " << r.height << "\n"
        << "origin_x " << r.origin_x << "\n"
        << "origin_y " << r.origin_y << "\n"
        << "cellsize_m " << r.cell_m << "\n"
        << "nodata nan\n"
        << "layout row_major_f64_le\n"
        << "tx " << r.tx.x << ' ' << r.tx.y << ' ' << r.tx.z << "\n"
        << "rx_z_m " << r.rx_z_m << "\n"
        << "frequency_hz " << r.frequency_hz << "\n"
        << "kind " << (r.offset_only ? "offset_minus_mean" : "prediction") << "\n";
}

void write_raster_csv(const CoverageRaster& r, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    out << std::setprecision(17) << "x,y,value_db\n";
    for (std::size_t iy = 0; iy < r.height; ++iy)
        for (std::size_t ix = 0; ix < r.width; ++ix)
            out << r.origin_x + static_cast<double>(ix) * r.cell_m << ','
                << r.origin_y + static_cast<double>(iy) * r.cell_m << ',' << r.at(ix, iy)
                << "\n";
}

FingerprintDB build_fingerprint_db(std::span<const ModelState> gateway_models,
                                   std::span<const Vec3> gateway_positions, const GridSpec& grid,
                                   int threads) {
    require(gateway_models.size() == gateway_positions.size(), ErrorCode::invalid_argument,
            "one model per gateway required");
    require(!gateway_models.empty(), ErrorCode::invalid_argument, "need at least one gateway");
    require(grid.spacing_m > 0, ErrorCode::invalid_argument, "grid spacing must be > 0");
    require(grid.x1 >= grid.x0 && grid.y1 >= grid.y0, ErrorCode::invalid_argument,
            "grid extent is inverted");

    const double f0 = gateway_models[0].frequency_hz;
    for (const ModelState& m : gateway_models) {
        require(m.p0_dbm.has_value(), ErrorCode::invalid_argument,
                "fingerprint models must be RSSI-mode (trained with --rssi-mode)");
        require(m.frequency_hz == f0, ErrorCode::mismatch,
                "gateway models disagree on frequency");
    }

    FingerprintDB db;
    const auto nx =
        static_cast<std::size_t>(std::floor((grid.x1 - grid.x0) / grid.spacing_m + 1e-9)) + 1;
    const auto ny =
        static_cast<std::size_t>(std::floor((grid.y1 - grid.y0) / grid.spacing_m + 1e-9)) + 1;
    db.positions.reserve(nx * ny);
    for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix)
            db.positions.push_back({grid.x0 + static_cast<double>(ix) * grid.spacing_m,
                                    grid.y0 + static_cast<double>(iy) * grid.spacing_m,
                                    grid.z_m});
    db.gateway_positions.assign(gateway_positions.begin(), gateway_positions.end());
    db.rssi.assign(db.positions.size() * db.gateway_count(), 0.0);

    std::vector<LinkQuery> queries(db.positions.size());
    PredictOptions opts;
    opts.threads = threads;
    for (std::size_t g = 0; g < gateway_models.size(); ++g) {
        for (std::size_t i = 0; i < db.positions.size(); ++i) {
            require(!(db.positions[i] == gateway_positions[g]), ErrorCode::invalid_argument,
                    "fingerprint grid position coincides with gateway " + std::to_string(g) +
                        "; change the grid height");
            queries[i] = {db.positions[i], gateway_positions[g], f0};
        }
        const std::vector<double> pred = predict_batch(gateway_models[g], queries, opts);
        for (std::size_t i = 0; i < db.positions.size(); ++i)
            db.rssi[i * db.gateway_count() + g] = pred[i];
    }
    return db;
}

Vec3 knn_localize(const FingerprintDB& db, std::span<const double> observed, std::size_t k,
                  std::size_t* masked_out) {
    const std::size_t g = db.gateway_count();
    require(observed.size() == g, ErrorCode::invalid_argument,
            "observation has " + std::to_string(observed.size()) + " entries, expected " +
                std::to_string(g));
    require(k >= 1 && k <= db.positions.size(), ErrorCode::invalid_argument,
            "k must lie in [1, grid size]");

    std::size_t masked = 0;
    for (double v : observed)
        if (std::isnan(v)) ++masked;
    require(masked < g, ErrorCode::invalid_argument, "observation has no unmasked entries");
    if (masked_out) *masked_out = masked;

    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(db.positions.size());
    for (std::size_t i = 0; i < db.positions.size(); ++i) {
        double d2 = 0.0;
        const double* row = db.rssi.data() + i * g;
        for (std::size_t j = 0; j < g; ++j) {
            if (std::isnan(observed[j])) continue;
            const double d = row[j] - observed[j];
            d2 += d * d;
        }
        dist.emplace_back(d2, i);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    Vec3 c{};
    for (std::size_t j = 0; j < k; ++j) c += db.positions[dist[j].second];
    return c * (1.0 / static_cast<double>(k));
}

LocalizationReport localization_report(std::span<const Vec3> estimates,
                                       std::span<const Vec3> truths, bool horizontal_only) {
    require(estimates.size() == truths.size(), ErrorCode::invalid_argument,
            "estimate/truth length mismatch");
    require(!estimates.empty(), ErrorCode::invalid_argument, "report over empty input");

    std::vector<double> err(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        Vec3 d = estimates[i] - truths[i];
        if (horizontal_only) d.z = 0.0;
        err[i] = norm(d);
    }
    std::sort(err.begin(), err.end());

    LocalizationReport r;
    r.count = err.size();
    double sum = 0.0;
    for (double e : err) sum += e;
    r.mean_m = sum / static_cast<double>(r.count);
    r.median_m = median_of_sorted(err);
    return r;
}

DiagnosticsReport diagnostics(const ModelState& model, std::span<const LinkQuery> queries) {
    require(!queries.empty(), ErrorCode::invalid_argument, "diagnostics over empty query set");

    DiagnosticsReport rep;
    const kernel::Prepared prep = kernel::prepare(model);
    const std::size_t n = model.gaussians.size();

    std::vector<kernel::ScanEntry> scan;
    std::vector<double> contrib(n);
    std::size_t consistent = 0;

    for (const LinkQuery& q : queries) {
        const double base = baseline_path_loss(q.tx, q.rx, q.frequency_hz, model.ple);
        const double full_offset = kernel::accumulate_offset(prep, q.tx, q.rx);
        const double pred_full = base + full_offset;

        std::fill(contrib.begin(), contrib.end(), 0.0);
        kernel::influence_scan(prep, q.tx, q.rx, scan);
        for (const auto& e : scan)
            contrib[e.index] = model.gaussians[e.index].offset_db * e.influence;

        for (std::size_t i = 0; i < n; ++i) {
            const double pred_without =
                base + kernel::fold_contributions(contrib.data(), n, i);
            const double err = std::abs((pred_full - pred_without) - contrib[i]);
            rep.max_additivity_error_db = std::max(rep.max_additivity_error_db, err);
        }

        for (const auto& e : scan) {
            const double o = model.gaussians[e.index].offset_db;
            if (e.influence > 0.0 && o != 0.0) {
                ++rep.sign_pairs;
                if ((contrib[e.index] > 0.0) == (o > 0.0)) ++consistent;
            }
        }
    }

    rep.sign_consistency_rate =
        rep.sign_pairs == 0 ? 1.0
                            : static_cast<double>(consistent) / static_cast<double>(rep.sign_pairs);
    return rep;
}

} // namespace propsplat
