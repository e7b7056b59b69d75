#include "propsplat.h"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "core/data_io.hpp"
#include "core/errors.hpp"
#include "core/evaluation.hpp"
#include "core/model.hpp"
#include "core/synth.hpp"
#include "core/training.hpp"

using json = nlohmann::json;
namespace pp = propsplat;

struct ps_dataset {
    pp::Dataset ds;
};
struct ps_model {
    pp::ModelState m;
    std::string metadata = "{}";
};
struct ps_world {
    pp::ObstacleWorld w;
};
struct ps_fpdb {
    pp::FingerprintDB db;
};
struct ps_raster {
    pp::CoverageRaster r;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

ps_status map_code(pp::ErrorCode c) {
    switch (c) {
        case pp::ErrorCode::invalid_argument: return PS_ERR_INVALID_ARGUMENT;
        case pp::ErrorCode::io: return PS_ERR_IO;
        case pp::ErrorCode::parse: return PS_ERR_PARSE;
        case pp::ErrorCode::format: return PS_ERR_FORMAT;
        case pp::ErrorCode::mismatch: return PS_ERR_MISMATCH;
        case pp::ErrorCode::internal: return PS_ERR_INTERNAL;
    }
    return PS_ERR_INTERNAL;
}

template <typename F>
ps_status wrap(F&& f) noexcept {
    try {
        f();
        return PS_OK;
    } catch (const pp::Error& e) {
        set_error(e.what());
        return map_code(e.code());
    } catch (const std::exception& e) {
        set_error(e.what());
        return PS_ERR_INTERNAL;
    } catch (...) {
        set_error("unknown error");
        return PS_ERR_INTERNAL;
    }
}

void need(bool cond, const char* what) {
    pp::require(cond, pp::ErrorCode::invalid_argument, what);
}

pp::Vec3 to_vec(const double p[3]) { return {p[0], p[1], p[2]}; }

pp::SchemaDescriptor parse_schema(const char* schema_json) {
    pp::SchemaDescriptor s;
    if (!schema_json || !*schema_json) return s;
    json j;
    try {
        j = json::parse(schema_json);
    } catch (const json::exception& e) {
        pp::fail(pp::ErrorCode::parse, std::string("schema: ") + e.what());
    }
    if (j.contains("columns"))
        for (auto& [k, v] : j["columns"].items()) s.columns[k] = v.get<std::string>();
    if (j.contains("default_tx_alt_m")) s.default_tx_alt_m = j["default_tx_alt_m"].get<double>();
    if (j.contains("default_rx_alt_m")) s.default_rx_alt_m = j["default_rx_alt_m"].get<double>();
    if (j.contains("allow_missing_value"))
        s.allow_missing_value = j["allow_missing_value"].get<bool>();
    return s;
}

pp::TrainConfig to_core_config(const ps_train_config& c) {
    pp::TrainConfig t;
    t.n_gaussians = c.n_gaussians;
    t.iterations = c.iterations;
    t.batch_size = c.batch_size;
    t.lr_center = c.lr_center;
    t.lr_log_scale = c.lr_log_scale;
    t.lr_rotation = c.lr_rotation;
    t.lr_offset = c.lr_offset;
    t.lr_gamma = c.lr_gamma;
    t.lr_p0 = c.lr_p0;
    t.adam_beta1 = c.adam_beta1;
    t.adam_beta2 = c.adam_beta2;
    t.adam_eps = c.adam_eps;
    t.weight_exponent = c.weight_exponent;
    t.weight_eps_m = c.weight_eps_m;
    t.init_sigma0 = c.init_sigma0;
    t.init_offset_std_db = c.init_offset_std_db;
    t.gamma_init = c.gamma_init;
    t.scale_min_m = c.scale_min_m;
    t.scale_max_m = c.scale_max_m;
    t.gamma_min = c.gamma_min;
    t.gamma_max = c.gamma_max;
    t.rssi_mode = c.rssi_mode != 0;
    t.rng_seed = c.rng_seed;
    t.threads = c.threads;
    return pp::apply_ablation(t, c.ablate_no_gaussians != 0, c.ablate_isotropic != 0,
                              c.ablate_fixed_ple != 0);
}

std::string config_metadata(const pp::TrainConfig& t, const pp::Dataset& ds) {
    json j;
    j["trained_with"] = std::string("propsplat ") + ps_version();
    j["n_gaussians"] = t.n_gaussians;
    j["iterations"] = t.iterations;
    j["batch_size"] = t.batch_size;
    j["learning_rates"] = {{"center", t.lr_center},   {"log_scale", t.lr_log_scale},
                           {"rotation", t.lr_rotation}, {"offset", t.lr_offset},
                           {"gamma", t.lr_gamma},      {"p0", t.lr_p0}};
    j["adam"] = {{"beta1", t.adam_beta1}, {"beta2", t.adam_beta2}, {"eps", t.adam_eps}};
    j["weighting"] = {{"exponent", t.weight_exponent}, {"eps_m", t.weight_eps_m}};
    j["init"] = {{"sigma0", t.init_sigma0},
                 {"offset_std_db", t.init_offset_std_db},
                 {"gamma_init", t.gamma_init}};
    j["clamps"] = {{"scale_min_m", t.scale_min_m},
                   {"scale_max_m", t.scale_max_m},
                   {"gamma_min", t.gamma_min},
                   {"gamma_max", t.gamma_max}};
    j["ablation"] = {{"no_gaussians", t.no_gaussians},
                     {"isotropic", t.isotropic},
                     {"fixed_ple", t.fixed_ple}};
    j["rssi_mode"] = t.rssi_mode;
    j["rng_seed"] = t.rng_seed;
    j["train_records"] = ds.records.size();
    return j.dump();
}

} // namespace

extern "C" {

const char* ps_version(void) { return "0.1.0"; }

const char* ps_last_error(void) { return g_last_error.c_str(); }

/* ------------------------------------------------------------------ dataset */

ps_status ps_dataset_read_csv(const char* path, const char* schema_json, ps_dataset** out) {
    return wrap([&] {
        need(path && out, "null argument");
        auto* h = new ps_dataset{pp::read_measurements_csv(path, parse_schema(schema_json))};
        *out = h;
    });
}

ps_status ps_dataset_write_csv(const ps_dataset* ds, const char* path) {
    return wrap([&] {
        need(ds && path, "null argument");
        pp::write_measurements_csv(ds->ds, std::string(path));
    });
}

ps_status ps_dataset_count(const ps_dataset* ds, size_t* out) {
    return wrap([&] {
        need(ds && out, "null argument");
        *out = ds->ds.records.size();
    });
}

ps_status ps_dataset_value_kind(const ps_dataset* ds, int* out) {
    return wrap([&] {
        need(ds && out, "null argument");
        *out = ds->ds.manifest.value_kind == pp::ValueKind::rssi ? 1 : 0;
    });
}

ps_status ps_dataset_frequencies(const ps_dataset* ds, double* buf, size_t cap, size_t* count) {
    return wrap([&] {
        need(ds && count, "null argument");
        const auto& f = ds->ds.manifest.frequencies;
        *count = f.size();
        if (buf)
            for (size_t i = 0; i < std::min(cap, f.size()); ++i) buf[i] = f[i];
    });
}

ps_status ps_dataset_record(const ps_dataset* ds, size_t i, double tx[3], double rx[3],
                            double* freq_hz, double* value_db, int* has_value) {
    return wrap([&] {
        need(ds, "null argument");
        pp::require(i < ds->ds.records.size(), pp::ErrorCode::invalid_argument,
                    "record index out of range");
        const auto ms = ds->ds.measurements();  // projected view
        const pp::Measurement& m = ms[i];
        if (tx) {
            tx[0] = m.tx.x;
            tx[1] = m.tx.y;
            tx[2] = m.tx.z;
        }
        if (rx) {
            rx[0] = m.rx.x;
            rx[1] = m.rx.y;
            rx[2] = m.rx.z;
        }
        if (freq_hz) *freq_hz = m.frequency_hz;
        if (value_db) *value_db = m.target_db;
        if (has_value) *has_value = ds->ds.records[i].has_value ? 1 : 0;
    });
}

ps_status ps_dataset_filter_frequency(const ps_dataset* ds, double freq_hz, ps_dataset** out) {
    return wrap([&] {
        need(ds && out, "null argument");
        *out = new ps_dataset{pp::filter_frequency(ds->ds, freq_hz)};
    });
}

ps_status ps_dataset_split_random(const ps_dataset* ds, double train_fraction, uint64_t seed,
                                  ps_dataset** train, ps_dataset** test) {
    return wrap([&] {
        need(ds && train && test, "null argument");
        pp::Rng rng(seed);
        auto [a, b] = pp::split_random(ds->ds, train_fraction, rng);
        *train = new ps_dataset{std::move(a)};
        *test = new ps_dataset{std::move(b)};
    });
}

ps_status ps_dataset_split_spatial(const ps_dataset* ds, double spacing_m, ps_dataset** train,
                                   ps_dataset** test) {
    return wrap([&] {
        need(ds && train && test, "null argument");
        auto [a, b] = pp::spatial_subsample(ds->ds, spacing_m);
        *train = new ps_dataset{std::move(a)};
        *test = new ps_dataset{std::move(b)};
    });
}

void ps_dataset_free(ps_dataset* ds) { delete ds; }

/* -------------------------------------------------------------------- world */

ps_status ps_world_read(const char* path, ps_world** out) {
    return wrap([&] {
        need(path && out, "null argument");
        *out = new ps_world{pp::read_world(path)};
    });
}

ps_status ps_world_path_loss(const ps_world* w, const double tx[3], const double rx[3],
                             double freq_hz, double* out_db) {
    return wrap([&] {
        need(w && tx && rx && out_db, "null argument");
        *out_db = pp::oracle_path_loss(w->w, to_vec(tx), to_vec(rx), freq_hz);
    });
}

ps_status ps_world_drive_test(const ps_world* w, const double* waypoints_xyz,
                              size_t n_waypoints, double spacing_m, const double tx[3],
                              double freq_hz, uint64_t seed, ps_dataset** out) {
    return wrap([&] {
        need(w && waypoints_xyz && tx && out, "null argument");
        pp::RouteSpec route;
        route.spacing_m = spacing_m;
        route.waypoints.reserve(n_waypoints);
        for (size_t i = 0; i < n_waypoints; ++i)
            route.waypoints.push_back(
                {waypoints_xyz[3 * i], waypoints_xyz[3 * i + 1], waypoints_xyz[3 * i + 2]});
        const auto ms = pp::generate_drive_test(w->w, route, to_vec(tx), freq_hz, seed);
        *out = new ps_dataset{pp::make_local_dataset(ms, pp::ValueKind::path_loss)};
    });
}

ps_status ps_world_indoor_grid(const ps_world* w, double x0, double y0, double x1, double y1,
                               double spacing_m, double tx_z_m, const double* gateways_xyz,
                               size_t n_gateways, double freq_hz, double p0_dbm, uint64_t seed,
                               ps_dataset** out_per_gateway) {
    return wrap([&] {
        need(w && gateways_xyz && out_per_gateway, "null argument");
        std::vector<pp::Vec3> gws(n_gateways);
        for (size_t g = 0; g < n_gateways; ++g)
            gws[g] = {gateways_xyz[3 * g], gateways_xyz[3 * g + 1], gateways_xyz[3 * g + 2]};
        pp::IndoorGridSpec grid{x0, y0, x1, y1, spacing_m, tx_z_m};
        auto per_gw = pp::generate_indoor_grid(w->w, grid, gws, freq_hz, p0_dbm, seed);
        for (size_t g = 0; g < n_gateways; ++g)
            out_per_gateway[g] = new ps_dataset{pp::make_local_dataset(per_gw[g],
                                                                       pp::ValueKind::rssi)};
    });
}

void ps_world_free(ps_world* w) { delete w; }

/* ----------------------------------------------------------------- training */

void ps_train_config_init(ps_train_config* cfg) {
    if (!cfg) return;
    const pp::TrainConfig d;
    *cfg = ps_train_config{};
    cfg->n_gaussians = d.n_gaussians;
    cfg->iterations = d.iterations;
    cfg->batch_size = d.batch_size;
    cfg->lr_center = d.lr_center;
    cfg->lr_log_scale = d.lr_log_scale;
    cfg->lr_rotation = d.lr_rotation;
    cfg->lr_offset = d.lr_offset;
    cfg->lr_gamma = d.lr_gamma;
    cfg->lr_p0 = d.lr_p0;
    cfg->adam_beta1 = d.adam_beta1;
    cfg->adam_beta2 = d.adam_beta2;
    cfg->adam_eps = d.adam_eps;
    cfg->weight_exponent = d.weight_exponent;
    cfg->weight_eps_m = d.weight_eps_m;
    cfg->init_sigma0 = d.init_sigma0;
    cfg->init_offset_std_db = d.init_offset_std_db;
    cfg->gamma_init = d.gamma_init;
    cfg->scale_min_m = d.scale_min_m;
    cfg->scale_max_m = d.scale_max_m;
    cfg->gamma_min = d.gamma_min;
    cfg->gamma_max = d.gamma_max;
    cfg->rng_seed = d.rng_seed;
    cfg->threads = d.threads;
}

ps_status ps_train(const ps_dataset* ds, double frequency_hz, const ps_train_config* cfg,
                   ps_progress_fn progress, void* user, ps_model** out) {
    return wrap([&] {
        need(ds && cfg && out, "null argument");
        pp::TrainConfig t = to_core_config(*cfg);

        const pp::ValueKind kind = ds->ds.manifest.value_kind;
        pp::require(t.rssi_mode == (kind == pp::ValueKind::rssi), pp::ErrorCode::mismatch,
                    t.rssi_mode ? "rssi_mode set but the dataset holds path-loss values"
                                : "dataset holds RSSI values; enable rssi_mode");

        pp::Dataset working;
        const pp::Dataset* use = &ds->ds;
        if (frequency_hz > 0.0) {
            working = pp::filter_frequency(ds->ds, frequency_hz);
            pp::require(!working.records.empty(), pp::ErrorCode::invalid_argument,
                        "no records at the requested frequency");
            use = &working;
        } else {
            pp::require(ds->ds.manifest.frequencies.size() == 1, pp::ErrorCode::invalid_argument,
                        "dataset holds " + std::to_string(ds->ds.manifest.frequencies.size()) +
                            " frequencies; pass one explicitly");
        }

        const auto ms = use->measurements();
        pp::ProgressFn cb;
        if (progress)
            cb = [&](const pp::IterationStats& s) {
                progress(s.iteration, s.loss, s.gamma, s.wall_s, user);
            };
        pp::TrainResult res = pp::train(ms, t, cb);
        if (use->manifest.origin)
            res.model.origin_latlon = {{use->manifest.origin->lat, use->manifest.origin->lon}};

        auto* h = new ps_model;
        h->m = std::move(res.model);
        h->metadata = config_metadata(t, *use);
        *out = h;
    });
}

/* ------------------------------------------------------------------- models */

ps_status ps_model_load(const char* path, ps_model** out) {
    return wrap([&] {
        need(path && out, "null argument");
        auto* h = new ps_model;
        h->m = pp::load_model(path, &h->metadata);
        *out = h;
    });
}

ps_status ps_model_save(const ps_model* m, const char* path) {
    return wrap([&] {
        need(m && path, "null argument");
        pp::save_model(m->m, path, m->metadata);
    });
}

ps_status ps_model_info(const ps_model* m, uint64_t* n_gaussians, double* gamma,
                        double* frequency_hz, int* rssi_mode, double* p0_dbm) {
    return wrap([&] {
        need(m, "null argument");
        if (n_gaussians) *n_gaussians = m->m.gaussians.size();
        if (gamma) *gamma = m->m.ple;
        if (frequency_hz) *frequency_hz = m->m.frequency_hz;
        if (rssi_mode) *rssi_mode = m->m.p0_dbm ? 1 : 0;
        if (p0_dbm) *p0_dbm = m->m.p0_dbm.value_or(0.0);
    });
}

ps_status ps_model_predict(const ps_model* m, const double tx[3], const double rx[3],
                           double freq_hz, double* out_db) {
    return wrap([&] {
        need(m && tx && rx && out_db, "null argument");
        *out_db = pp::predict(m->m, {to_vec(tx), to_vec(rx), freq_hz});
    });
}

ps_status ps_model_predict_batch(const ps_model* m, size_t n, const double* tx_xyz,
                                 const double* rx_xyz, const double* freq_hz, int threads,
                                 int cull, double* out_db) {
    return wrap([&] {
        need(m && (n == 0 || (tx_xyz && rx_xyz && freq_hz && out_db)), "null argument");
        std::vector<pp::LinkQuery> qs(n);
        for (size_t i = 0; i < n; ++i)
            qs[i] = {{tx_xyz[3 * i], tx_xyz[3 * i + 1], tx_xyz[3 * i + 2]},
                     {rx_xyz[3 * i], rx_xyz[3 * i + 1], rx_xyz[3 * i + 2]},
                     freq_hz[i]};
        pp::PredictOptions opts;
        opts.threads = threads;
        opts.cull = cull != 0;
        const auto v = pp::predict_batch(m->m, qs, opts);
        std::memcpy(out_db, v.data(), n * sizeof(double));
    });
}

ps_status ps_model_trace(const ps_model* m, const double tx[3], const double rx[3],
                         double freq_hz, ps_trace_entry* buf, size_t cap, size_t* count) {
    return wrap([&] {
        need(m && tx && rx && count, "null argument");
        const auto trace = pp::contribution_trace(m->m, {to_vec(tx), to_vec(rx), freq_hz});
        *count = trace.size();
        if (buf)
            for (size_t i = 0; i < std::min(cap, trace.size()); ++i)
                buf[i] = {trace[i].index, trace[i].along_m, trace[i].influence,
                          trace[i].contribution_db};
    });
}

ps_status ps_model_predict_dataset(const ps_model* m, const ps_dataset* ds, int threads,
                                   double* out_db) {
    return wrap([&] {
        need(m && ds && out_db, "null argument");
        const auto ms = ds->ds.measurements();
        std::vector<pp::LinkQuery> qs(ms.size());
        for (size_t i = 0; i < ms.size(); ++i) qs[i] = {ms[i].tx, ms[i].rx, ms[i].frequency_hz};
        pp::PredictOptions opts;
        opts.threads = threads;
        const auto v = pp::predict_batch(m->m, qs, opts);
        std::memcpy(out_db, v.data(), v.size() * sizeof(double));
    });
}

void ps_model_free(ps_model* m) { delete m; }

/* --------------------------------------------------------------- evaluation */

ps_status ps_evaluate(const ps_model* m, const ps_dataset* ds, int threads, ps_metrics* out) {
    return wrap([&] {
        need(m && ds && out, "null argument");
        const pp::ValueKind kind = ds->ds.manifest.value_kind;
        pp::require((m->m.p0_dbm.has_value()) == (kind == pp::ValueKind::rssi),
                    pp::ErrorCode::mismatch,
                    "model mode (path loss vs RSSI) does not match the dataset value kind");
        const auto ms = ds->ds.measurements();
        pp::require(!ms.empty(), pp::ErrorCode::invalid_argument, "empty dataset");
        std::vector<pp::LinkQuery> qs(ms.size());
        std::vector<double> truth(ms.size());
        for (size_t i = 0; i < ms.size(); ++i) {
            pp::require(std::isfinite(ms[i].target_db), pp::ErrorCode::invalid_argument,
                        "dataset row " + std::to_string(i) + " has no value to evaluate against");
            qs[i] = {ms[i].tx, ms[i].rx, ms[i].frequency_hz};
            truth[i] = ms[i].target_db;
        }
        pp::PredictOptions opts;
        opts.threads = threads;
        const auto pred = pp::predict_batch(m->m, qs, opts);
        const auto r = pp::error_metrics(pred, truth);
        *out = {r.mae_db, r.rmse_db, r.median_abs_err_db, r.p95_abs_err_db, r.count};
    });
}

ps_status ps_diagnose(const ps_model* m, size_t n_queries, const double* tx_xyz,
                      const double* rx_xyz, double* max_additivity_err_db,
                      double* sign_consistency_rate, uint64_t* sign_pairs) {
    return wrap([&] {
        need(m && tx_xyz && rx_xyz, "null argument");
        std::vector<pp::LinkQuery> qs(n_queries);
        for (size_t i = 0; i < n_queries; ++i)
            qs[i] = {{tx_xyz[3 * i], tx_xyz[3 * i + 1], tx_xyz[3 * i + 2]},
                     {rx_xyz[3 * i], rx_xyz[3 * i + 1], rx_xyz[3 * i + 2]},
                     m->m.frequency_hz};
        const auto rep = pp::diagnostics(m->m, qs);
        if (max_additivity_err_db) *max_additivity_err_db = rep.max_additivity_error_db;
        if (sign_consistency_rate) *sign_consistency_rate = rep.sign_consistency_rate;
        if (sign_pairs) *sign_pairs = rep.sign_pairs;
    });
}

ps_status ps_gradcheck(uint32_t max_gaussians, uint32_t max_batch, uint32_t trials,
                       uint64_t seed, double step, double* max_rel_err) {
    return wrap([&] {
        need(max_rel_err, "null argument");
        *max_rel_err = pp::gradcheck_sweep(max_gaussians, max_batch, trials, seed, step);
    });
}

ps_status ps_coverage_grid(const ps_model* m, const double tx[3], double extent_m, double cell_m,
                           double rx_z_m, int offset_only, int threads, ps_raster** out) {
    return wrap([&] {
        need(m && tx && out, "null argument");
        *out = new ps_raster{pp::coverage_grid(m->m, to_vec(tx), extent_m, cell_m, rx_z_m,
                                               offset_only != 0, threads)};
    });
}

ps_status ps_raster_info(const ps_raster* r, uint64_t* width, uint64_t* height, double* origin_x,
                         double* origin_y, double* cell_m) {
    return wrap([&] {
        need(r, "null argument");
        if (width) *width = r->r.width;
        if (height) *height = r->r.height;
        if (origin_x) *origin_x = r->r.origin_x;
        if (origin_y) *origin_y = r->r.origin_y;
        if (cell_m) *cell_m = r->r.cell_m;
    });
}

ps_status ps_raster_values(const ps_raster* r, const double** data) {
    return wrap([&] {
        need(r && data, "null argument");
        *data = r->r.values.data();
    });
}

ps_status ps_raster_write(const ps_raster* r, const char* path_prefix, int with_csv) {
    return wrap([&] {
        need(r && path_prefix, "null argument");
        pp::write_raster(r->r, path_prefix);
        if (with_csv) pp::write_raster_csv(r->r, std::string(path_prefix) + ".csv");
    });
}

void ps_raster_free(ps_raster* r) { delete r; }

/* ------------------------------------------------------------- localization */

ps_status ps_fpdb_build(size_t n_gateways, const ps_model* const* models,
                        const double* gateway_xyz, double x0, double y0, double x1, double y1,
                        double spacing_m, double z_m, int threads, ps_fpdb** out) {
    return wrap([&] {
        need(models && gateway_xyz && out, "null argument");
        std::vector<pp::ModelState> ms(n_gateways);
        std::vector<pp::Vec3> pos(n_gateways);
        for (size_t g = 0; g < n_gateways; ++g) {
            need(models[g], "null gateway model");
            ms[g] = models[g]->m;
            pos[g] = {gateway_xyz[3 * g], gateway_xyz[3 * g + 1], gateway_xyz[3 * g + 2]};
        }
        pp::GridSpec grid{x0, y0, x1, y1, spacing_m, z_m};
        *out = new ps_fpdb{pp::build_fingerprint_db(ms, pos, grid, threads)};
    });
}

ps_status ps_fpdb_info(const ps_fpdb* db, uint64_t* n_positions, uint64_t* n_gateways) {
    return wrap([&] {
        need(db, "null argument");
        if (n_positions) *n_positions = db->db.positions.size();
        if (n_gateways) *n_gateways = db->db.gateway_count();
    });
}

ps_status ps_fpdb_fingerprint(const ps_fpdb* db, size_t position_index, double pos[3],
                              double* rssi) {
    return wrap([&] {
        need(db, "null argument");
        pp::require(position_index < db->db.positions.size(), pp::ErrorCode::invalid_argument,
                    "position index out of range");
        if (pos) {
            pos[0] = db->db.positions[position_index].x;
            pos[1] = db->db.positions[position_index].y;
            pos[2] = db->db.positions[position_index].z;
        }
        if (rssi) {
            const size_t g = db->db.gateway_count();
            std::memcpy(rssi, db->db.rssi.data() + position_index * g, g * sizeof(double));
        }
    });
}

ps_status ps_fpdb_localize(const ps_fpdb* db, const double* observed_rssi, uint32_t k,
                           double out_pos[3], uint32_t* masked_count) {
    return wrap([&] {
        need(db && observed_rssi && out_pos, "null argument");
        size_t masked = 0;
        const pp::Vec3 p = pp::knn_localize(
            db->db, std::span(observed_rssi, db->db.gateway_count()), k, &masked);
        out_pos[0] = p.x;
        out_pos[1] = p.y;
        out_pos[2] = p.z;
        if (masked_count) *masked_count = static_cast<uint32_t>(masked);
    });
}

void ps_fpdb_free(ps_fpdb* db) { delete db; }

/* --------------------------------------------------------------------- misc */

ps_status ps_file_crc32(const char* path, uint32_t* out) {
    return wrap([&] {
        need(path && out, "null argument");
        *out = pp::file_crc32(path);
    });
}

} // extern "C"
