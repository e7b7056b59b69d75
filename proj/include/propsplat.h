/* propsplat -- map-free radio propagation modeling with learnable 3D
 * Gaussian offsets over a log-distance baseline.
 *
 * C API: opaque handles, status-code returns, thread-local error strings.
 * Every function returns PS_OK on success; on failure the return names the
 * error class and ps_last_error() gives a one-line message.
 */

#ifndef PROPSPLAT_H
#define PROPSPLAT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PS_API __declspec(dllexport)
#else
#define PS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ps_status {
    PS_OK = 0,
    PS_ERR_INVALID_ARGUMENT = 1,
    PS_ERR_IO = 2,
    PS_ERR_PARSE = 3,
    PS_ERR_FORMAT = 4,
    PS_ERR_MISMATCH = 5,
    PS_ERR_INTERNAL = 6
} ps_status;

typedef struct ps_dataset ps_dataset;
typedef struct ps_model ps_model;
typedef struct ps_world ps_world;
typedef struct ps_fpdb ps_fpdb;
typedef struct ps_raster ps_raster;

PS_API const char* ps_version(void);

/* Thread-local message for the most recent failure on this thread. */
PS_API const char* ps_last_error(void);

/* ---------------------------------------------------------------- datasets
 * CSV measurement files; geodetic or local columns, see docs/FORMATS.md.
 * schema_json (nullable) overrides column names and defaults, e.g.
 *   {"columns": {"tx_lat": "site_lat"}, "default_rx_alt_m": 2.0,
 *    "allow_missing_value": true}
 */
PS_API ps_status ps_dataset_read_csv(const char* path, const char* schema_json,
                                     ps_dataset** out);
PS_API ps_status ps_dataset_write_csv(const ps_dataset* ds, const char* path);
PS_API ps_status ps_dataset_count(const ps_dataset* ds, size_t* out);
/* 0 = path loss, 1 = RSSI */
PS_API ps_status ps_dataset_value_kind(const ps_dataset* ds, int* out);
PS_API ps_status ps_dataset_frequencies(const ps_dataset* ds, double* buf, size_t cap,
                                        size_t* count);
/* Record i in the local frame (geodetic files are projected). */
PS_API ps_status ps_dataset_record(const ps_dataset* ds, size_t i, double tx[3], double rx[3],
                                   double* freq_hz, double* value_db, int* has_value);
PS_API ps_status ps_dataset_filter_frequency(const ps_dataset* ds, double freq_hz,
                                             ps_dataset** out);
PS_API ps_status ps_dataset_split_random(const ps_dataset* ds, double train_fraction,
                                         uint64_t seed, ps_dataset** train, ps_dataset** test);
/* Greedy spatial thinning: kept receivers are >= spacing_m apart (2D). */
PS_API ps_status ps_dataset_split_spatial(const ps_dataset* ds, double spacing_m,
                                          ps_dataset** train, ps_dataset** test);
PS_API void ps_dataset_free(ps_dataset* ds);

/* ---------------------------------------------------------- synthetic oracle
 * Obstacle worlds with known ground truth (text format, docs/FORMATS.md).
 */
PS_API ps_status ps_world_read(const char* path, ps_world** out);
PS_API ps_status ps_world_path_loss(const ps_world* w, const double tx[3], const double rx[3],
                                    double freq_hz, double* out_db);
/* Rx samples every spacing_m along the waypoint polyline (xyz triples). */
PS_API ps_status ps_world_drive_test(const ps_world* w, const double* waypoints_xyz,
                                     size_t n_waypoints, double spacing_m, const double tx[3],
                                     double freq_hz, uint64_t seed, ps_dataset** out);
/* One RSSI dataset per gateway; out_per_gateway must have n_gateways slots. */
PS_API ps_status ps_world_indoor_grid(const ps_world* w, double x0, double y0, double x1,
                                      double y1, double spacing_m, double tx_z_m,
                                      const double* gateways_xyz, size_t n_gateways,
                                      double freq_hz, double p0_dbm, uint64_t seed,
                                      ps_dataset** out_per_gateway);
PS_API void ps_world_free(ps_world* w);

/* ----------------------------------------------------------------- training */
typedef struct ps_train_config {
    uint64_t n_gaussians;
    uint64_t iterations;
    uint64_t batch_size;
    double lr_center, lr_log_scale, lr_rotation, lr_offset, lr_gamma, lr_p0;
    double adam_beta1, adam_beta2, adam_eps;
    double weight_exponent, weight_eps_m;
    double init_sigma0, init_offset_std_db, gamma_init;
    double scale_min_m, scale_max_m, gamma_min, gamma_max;
    int ablate_no_gaussians, ablate_isotropic, ablate_fixed_ple;
    int rssi_mode;
    uint64_t rng_seed;
    int threads; /* 1 = strict sequential (bit-reproducible) */
} ps_train_config;

PS_API void ps_train_config_init(ps_train_config* cfg);

typedef void (*ps_progress_fn)(uint64_t iteration, double loss, double gamma, double wall_s,
                               void* user);

/* frequency_hz = 0 uses the dataset's sole frequency (errors if several). */
PS_API ps_status ps_train(const ps_dataset* ds, double frequency_hz,
                          const ps_train_config* cfg, ps_progress_fn progress, void* user,
                          ps_model** out);

/* ------------------------------------------------------------------- models */
PS_API ps_status ps_model_load(const char* path, ps_model** out);
PS_API ps_status ps_model_save(const ps_model* m, const char* path);
PS_API ps_status ps_model_info(const ps_model* m, uint64_t* n_gaussians, double* gamma,
                               double* frequency_hz, int* rssi_mode, double* p0_dbm);
PS_API ps_status ps_model_predict(const ps_model* m, const double tx[3], const double rx[3],
                                  double freq_hz, double* out_db);
/* cull enables the optional far-primitive skip (off in every invariant test). */
PS_API ps_status ps_model_predict_batch(const ps_model* m, size_t n, const double* tx_xyz,
                                        const double* rx_xyz, const double* freq_hz,
                                        int threads, int cull, double* out_db);

typedef struct ps_trace_entry {
    uint64_t index;
    double along_m;
    double influence;
    double contribution_db;
} ps_trace_entry;

/* Per-primitive contributions sorted by projection distance. Returns the
 * full count in *count; fills up to cap entries. */
PS_API ps_status ps_model_trace(const ps_model* m, const double tx[3], const double rx[3],
                                double freq_hz, ps_trace_entry* buf, size_t cap, size_t* count);
PS_API ps_status ps_model_predict_dataset(const ps_model* m, const ps_dataset* ds, int threads,
                                          double* out_db);
PS_API void ps_model_free(ps_model* m);

/* --------------------------------------------------------------- evaluation */
typedef struct ps_metrics {
    double mae_db, rmse_db, median_abs_err_db, p95_abs_err_db;
    uint64_t count;
} ps_metrics;

PS_API ps_status ps_evaluate(const ps_model* m, const ps_dataset* ds, int threads,
                             ps_metrics* out);
/* Leave-one-out additivity plus offset-sign consistency over given links. */
PS_API ps_status ps_diagnose(const ps_model* m, size_t n_queries, const double* tx_xyz,
                             const double* rx_xyz, double* max_additivity_err_db,
                             double* sign_consistency_rate, uint64_t* sign_pairs);
/* Worst analytic-vs-central-difference relative gradient error over `trials`
 * random scenes with up to max_gaussians primitives and max_batch samples. */
PS_API ps_status ps_gradcheck(uint32_t max_gaussians, uint32_t max_batch, uint32_t trials,
                              uint64_t seed, double step, double* max_rel_err);

PS_API ps_status ps_coverage_grid(const ps_model* m, const double tx[3], double extent_m,
                                  double cell_m, double rx_z_m, int offset_only, int threads,
                                  ps_raster** out);
PS_API ps_status ps_raster_info(const ps_raster* r, uint64_t* width, uint64_t* height,
                                double* origin_x, double* origin_y, double* cell_m);
PS_API ps_status ps_raster_values(const ps_raster* r, const double** data);
PS_API ps_status ps_raster_write(const ps_raster* r, const char* path_prefix, int with_csv);
PS_API void ps_raster_free(ps_raster* r);

/* ------------------------------------------------------------- localization */
PS_API ps_status ps_fpdb_build(size_t n_gateways, const ps_model* const* models,
                               const double* gateway_xyz, double x0, double y0, double x1,
                               double y1, double spacing_m, double z_m, int threads,
                               ps_fpdb** out);
PS_API ps_status ps_fpdb_info(const ps_fpdb* db, uint64_t* n_positions, uint64_t* n_gateways);
PS_API ps_status ps_fpdb_fingerprint(const ps_fpdb* db, size_t position_index, double pos[3],
                                     double* rssi);
/* NaN entries in observed_rssi are masked out of the match. */
PS_API ps_status ps_fpdb_localize(const ps_fpdb* db, const double* observed_rssi, uint32_t k,
                                  double out_pos[3], uint32_t* masked_count);
PS_API void ps_fpdb_free(ps_fpdb* db);

/* -------------------------------------------------------------------- misc */
PS_API ps_status ps_file_crc32(const char* path, uint32_t* out);

#ifdef __cplusplus
}
#endif

#endif /* PROPSPLAT_H */
