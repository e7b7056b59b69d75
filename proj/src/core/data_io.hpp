#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/rng.hpp"
#include "core/training.hpp"

namespace propsplat {

enum class CoordMode { geodetic, local };

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    double alt_m = 0.0;
};

// One parsed row, kept in its source coordinate system so writing a dataset
// back out is bit-exact.
struct RawRecord {
    GeoPoint tx_geo, rx_geo;  // valid in geodetic mode
    Vec3 tx_local, rx_local;  // valid in local mode
    double frequency_hz = 0.0;
    double value_db = 0.0;
    bool has_value = true;
};

struct DatasetManifest {
    CoordMode mode = CoordMode::local;
    std::optional<GeoPoint> origin;  // projection origin (alt unused)
    std::vector<double> frequencies;
    std::size_t record_count = 0;
    ValueKind value_kind = ValueKind::path_loss;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<RawRecord> records;

    // Records projected into the local frame (geodetic inputs use the
    // manifest origin). Query rows without a value get target_db = NaN.
    std::vector<Measurement> measurements() const;
};

// Canonical column names, overridable one by one. Missing altitude columns
// fall back to the mast/rover defaults. value_kind defaults per column name
// (path_loss_db vs rssi_db) or comes from an explicit value_kind column.
struct SchemaDescriptor {
    std::map<std::string, std::string> columns;  // canonical -> actual
    double default_tx_alt_m = 17.0;
    double default_rx_alt_m = 1.5;
    bool allow_missing_value = false;  // accept query files without a value column
};

inline constexpr double kEarthRadiusM = 6371000.0;

Vec3 geo_to_local(double lat, double lon, double alt_m, const GeoPoint& origin);
GeoPoint local_to_geo(const Vec3& p, const GeoPoint& origin);

Dataset parse_measurements(std::istream& in, const SchemaDescriptor& schema = {});
Dataset read_measurements_csv(const std::string& path, const SchemaDescriptor& schema = {});
void write_measurements_csv(const Dataset& ds, std::ostream& out);
void write_measurements_csv(const Dataset& ds, const std::string& path);

// Wrap synthetic local-frame measurements as a dataset.
Dataset make_local_dataset(const std::vector<Measurement>& ms, ValueKind kind);

// Keep only records at the given frequency (exact match).
Dataset filter_frequency(const Dataset& ds, double frequency_hz);

// Greedy thinning along the original ordering: a record enters the train
// subset iff its Rx is at least `spacing_m` (2D) from every previously
// selected Rx. Deterministic; remainder preserves order too.
std::pair<Dataset, Dataset> spatial_subsample(const Dataset& ds, double spacing_m);

std::pair<Dataset, Dataset> split_random(const Dataset& ds, double train_fraction, Rng& rng);

// Model file ("PSPL"): little-endian binary with a JSON metadata blob and a
// trailing CRC-32. Layout documented in docs/FORMATS.md.
void save_model(const ModelState& model, const std::string& path,
                const std::string& metadata_json = "{}");
ModelState load_model(const std::string& path, std::string* metadata_json = nullptr);

std::uint32_t file_crc32(const std::string& path);

} // namespace propsplat
