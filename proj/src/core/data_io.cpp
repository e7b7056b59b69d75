#include "core/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "core/errors.hpp"

namespace propsplat {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct ColumnMap {
    // canonical name -> column index, -1 when absent
    std::map<std::string, int> idx;

    int find(const std::string& canonical) const {
        auto it = idx.find(canonical);
        return it == idx.end() ? -1 : it->second;
    }
};

const char* const kGeodeticCols[] = {"tx_lat", "tx_lon", "tx_alt_m",
                                     "rx_lat", "rx_lon", "rx_alt_m"};
const char* const kLocalCols[] = {"tx_x_m", "tx_y_m", "tx_z_m", "rx_x_m", "rx_y_m", "rx_z_m"};

std::string resolve(const SchemaDescriptor& schema, const std::string& canonical) {
    auto it = schema.columns.find(canonical);
    return it == schema.columns.end() ? canonical : it->second;
}

} // namespace

Vec3 geo_to_local(double lat, double lon, double alt_m, const GeoPoint& origin) {
    require(lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0,
            ErrorCode::invalid_argument, "geodetic coordinates out of bounds");
    const double to_rad = kPi / 180.0;
    const double x = kEarthRadiusM * std::cos(origin.lat * to_rad) * (lon - origin.lon) * to_rad;
    const double y = kEarthRadiusM * (lat - origin.lat) * to_rad;
    return {x, y, alt_m};
}

GeoPoint local_to_geo(const Vec3& p, const GeoPoint& origin) {
    const double to_deg = 180.0 / kPi;
    GeoPoint g;
    g.lat = origin.lat + (p.y / kEarthRadiusM) * to_deg;
    g.lon = origin.lon + (p.x / (kEarthRadiusM * std::cos(origin.lat * kPi / 180.0))) * to_deg;
    g.alt_m = p.z;
    return g;
}

std::vector<Measurement> Dataset::measurements() const {
    std::vector<Measurement> out;
    out.reserve(records.size());
    const GeoPoint origin = manifest.origin.value_or(GeoPoint{});
    for (const RawRecord& r : records) {
        Vec3 tx, rx;
        if (manifest.mode == CoordMode::geodetic) {
            tx = geo_to_local(r.tx_geo.lat, r.tx_geo.lon, r.tx_geo.alt_m, origin);
            rx = geo_to_local(r.rx_geo.lat, r.rx_geo.lon, r.rx_geo.alt_m, origin);
        } else {
            tx = r.tx_local;
            rx = r.rx_local;
        }
        const double value = r.has_value ? r.value_db : std::nan("");
        out.push_back(Measurement::make(tx, rx, r.frequency_hz, value));
    }
    return out;
}

Dataset parse_measurements(std::istream& in, const SchemaDescriptor& schema) {
    std::string header;
    require(static_cast<bool>(std::getline(in, header)), ErrorCode::parse,
            "empty input: missing header row");

    const std::vector<std::string> cols = split_csv_line(header);
    ColumnMap cm;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        for (const char* canonical :
             {"tx_lat", "tx_lon", "tx_alt_m", "rx_lat", "rx_lon", "rx_alt_m", "tx_x_m",
              "tx_y_m", "tx_z_m", "rx_x_m", "rx_y_m", "rx_z_m", "freq_hz", "path_loss_db",
              "rssi_db", "value_db", "value_kind"}) {
            if (cols[i] == resolve(schema, canonical)) cm.idx[canonical] = static_cast<int>(i);
        }
    }

    const bool geodetic = cm.find("tx_lat") >= 0;
    const bool local = cm.find("tx_x_m") >= 0;
    require(geodetic != local, ErrorCode::parse,
            "header must name either geodetic (tx_lat,...) or local (tx_x_m,...) columns");
    for (const char* c : geodetic ? kGeodeticCols : kLocalCols) {
        if (std::strcmp(c, "tx_alt_m") == 0 || std::strcmp(c, "rx_alt_m") == 0 ||
            std::strcmp(c, "tx_z_m") == 0 || std::strcmp(c, "rx_z_m") == 0)
            continue;  // altitude columns are optional
        require(cm.find(c) >= 0, ErrorCode::parse,
                std::string("missing required column '") + resolve(schema, c) + "'");
    }
    require(cm.find("freq_hz") >= 0, ErrorCode::parse,
            "missing required column '" + resolve(schema, "freq_hz") + "'");

    const bool has_pl = cm.find("path_loss_db") >= 0;
    const bool has_rssi = cm.find("rssi_db") >= 0;
    const bool has_generic = cm.find("value_db") >= 0;
    require(has_pl + has_rssi + has_generic <= 1, ErrorCode::parse,
            "multiple value columns found (path_loss_db / rssi_db / value_db)");
    require(has_pl || has_rssi || has_generic || schema.allow_missing_value, ErrorCode::parse,
            "no value column found (path_loss_db / rssi_db / value_db)");
    if (has_generic)
        require(cm.find("value_kind") >= 0, ErrorCode::parse,
                "value_db requires a value_kind column");

    Dataset ds;
    ds.manifest.mode = geodetic ? CoordMode::geodetic : CoordMode::local;
    std::optional<ValueKind> kind;
    if (has_pl) kind = ValueKind::path_loss;
    if (has_rssi) kind = ValueKind::rssi;

    std::vector<std::string> errors;
    auto row_error = [&](std::size_t line, const std::string& msg) {
        if (errors.size() < 20) errors.push_back("line " + std::to_string(line) + ": " + msg);
    };

    std::set<double> freqs;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != cols.size()) {
            row_error(line_no, "expected " + std::to_string(cols.size()) + " fields, got " +
                                   std::to_string(f.size()));
            continue;
        }

        bool row_ok = true;
        auto num = [&](const char* canonical, double fallback, bool required) {
            const int i = cm.find(canonical);
            if (i < 0) {
                if (required) {
                    row_error(line_no, std::string("missing column '") + canonical + "'");
                    row_ok = false;
                }
                return fallback;
            }
            const std::string& s = f[static_cast<std::size_t>(i)];
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
                row_error(line_no, "column '" + cols[static_cast<std::size_t>(i)] +
                                       "': malformed numeric value '" + s + "'");
                row_ok = false;
                return fallback;
            }
            return v;
        };

        RawRecord r;
        if (geodetic) {
            r.tx_geo = {num("tx_lat", 0, true), num("tx_lon", 0, true),
                        num("tx_alt_m", schema.default_tx_alt_m, false)};
            r.rx_geo = {num("rx_lat", 0, true), num("rx_lon", 0, true),
                        num("rx_alt_m", schema.default_rx_alt_m, false)};
            if (row_ok) {
                if (r.tx_geo.lat < -90 || r.tx_geo.lat > 90 || r.rx_geo.lat < -90 ||
                    r.rx_geo.lat > 90) {
                    row_error(line_no, "latitude out of [-90, 90]");
                    row_ok = false;
                } else if (r.tx_geo.lon < -180 || r.tx_geo.lon > 180 || r.rx_geo.lon < -180 ||
                           r.rx_geo.lon > 180) {
                    row_error(line_no, "longitude out of [-180, 180]");
                    row_ok = false;
                }
            }
        } else {
            r.tx_local = {num("tx_x_m", 0, true), num("tx_y_m", 0, true),
                          num("tx_z_m", schema.default_tx_alt_m, false)};
            r.rx_local = {num("rx_x_m", 0, true), num("rx_y_m", 0, true),
                          num("rx_z_m", schema.default_rx_alt_m, false)};
        }

        r.frequency_hz = num("freq_hz", 0, true);
        if (row_ok && r.frequency_hz <= 0) {
            row_error(line_no, "freq_hz must be > 0");
            row_ok = false;
        }

        if (has_pl || has_rssi) {
            r.value_db = num(has_pl ? "path_loss_db" : "rssi_db", 0, true);
        } else if (has_generic) {
            r.value_db = num("value_db", 0, true);
            const std::string& k = f[static_cast<std::size_t>(cm.find("value_kind"))];
            ValueKind row_kind;
            if (k == "path_loss") {
                row_kind = ValueKind::path_loss;
            } else if (k == "rssi") {
                row_kind = ValueKind::rssi;
            } else {
                row_error(line_no, "value_kind must be 'path_loss' or 'rssi', got '" + k + "'");
                row_ok = false;
                row_kind = ValueKind::path_loss;
            }
            if (row_ok) {
                if (!kind) {
                    kind = row_kind;
                } else if (*kind != row_kind) {
                    row_error(line_no, "mixed value_kind within one file");
                    row_ok = false;
                }
            }
        } else {
            r.has_value = false;
        }

        if (!row_ok) continue;
        freqs.insert(r.frequency_hz);
        ds.records.push_back(r);
    }

    if (!errors.empty()) {
        std::string msg = std::to_string(errors.size()) + " row error(s):";
        for (const std::string& e : errors) msg += "\n  " + e;
        fail(ErrorCode::parse, msg);
    }

    ds.manifest.value_kind = kind.value_or(ValueKind::path_loss);
    ds.manifest.frequencies.assign(freqs.begin(), freqs.end());
    ds.manifest.record_count = ds.records.size();
    if (geodetic && !ds.records.empty())
        ds.manifest.origin = GeoPoint{ds.records[0].tx_geo.lat, ds.records[0].tx_geo.lon, 0};
    return ds;
}

Dataset read_measurements_csv(const std::string& path, const SchemaDescriptor& schema) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io, "cannot open '" + path + "' for reading");
    return parse_measurements(in, schema);
}

void write_measurements_csv(const Dataset& ds, std::ostream& out) {
    const bool geodetic = ds.manifest.mode == CoordMode::geodetic;
    bool any_value = false, all_value = true;
    for (const RawRecord& r : ds.records) {
        any_value |= r.has_value;
        all_value &= r.has_value;
    }
    require(!any_value || all_value, ErrorCode::invalid_argument,
            "cannot write a dataset that mixes labeled and unlabeled rows");

    out << (geodetic ? "tx_lat,tx_lon,tx_alt_m,rx_lat,rx_lon,rx_alt_m,freq_hz"
                     : "tx_x_m,tx_y_m,tx_z_m,rx_x_m,rx_y_m,rx_z_m,freq_hz");
    if (all_value && !ds.records.empty() && any_value)
        out << (ds.manifest.value_kind == ValueKind::rssi ? ",rssi_db" : ",path_loss_db");
    else if (ds.records.empty())
        out << (ds.manifest.value_kind == ValueKind::rssi ? ",rssi_db" : ",path_loss_db");
    out << "\n";

    out << std::setprecision(17);
    for (const RawRecord& r : ds.records) {
        if (geodetic) {
            out << r.tx_geo.lat << ',' << r.tx_geo.lon << ',' << r.tx_geo.alt_m << ','
                << r.rx_geo.lat << ',' << r.rx_geo.lon << ',' << r.rx_geo.alt_m << ','
                << r.frequency_hz;
        } else {
            out << r.tx_local.x << ',' << r.tx_local.y << ',' << r.tx_local.z << ','
                << r.rx_local.x << ',' << r.rx_local.y << ',' << r.rx_local.z << ','
                << r.frequency_hz;
        }
        if (r.has_value) out << ',' << r.value_db;
        out << "\n";
    }
}

void write_measurements_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    write_measurements_csv(ds, out);
    require(out.good(), ErrorCode::io, "write to '" + path + "' failed");
}

Dataset make_local_dataset(const std::vector<Measurement>& ms, ValueKind kind) {
    Dataset ds;
    ds.manifest.mode = CoordMode::local;
    ds.manifest.value_kind = kind;
    std::set<double> freqs;
    ds.records.reserve(ms.size());
    for (const Measurement& m : ms) {
        RawRecord r;
        r.tx_local = m.tx;
        r.rx_local = m.rx;
        r.frequency_hz = m.frequency_hz;
        r.value_db = m.target_db;
        r.has_value = std::isfinite(m.target_db);
        ds.records.push_back(r);
        freqs.insert(m.frequency_hz);
    }
    ds.manifest.frequencies.assign(freqs.begin(), freqs.end());
    ds.manifest.record_count = ds.records.size();
    return ds;
}

Dataset filter_frequency(const Dataset& ds, double frequency_hz) {
    Dataset out;
    out.manifest = ds.manifest;
    out.manifest.frequencies = {frequency_hz};
    for (const RawRecord& r : ds.records)
        if (r.frequency_hz == frequency_hz) out.records.push_back(r);
    out.manifest.record_count = out.records.size();
    return out;
}

std::pair<Dataset, Dataset> spatial_subsample(const Dataset& ds, double spacing_m) {
    require(spacing_m >= 0, ErrorCode::invalid_argument, "spacing must be >= 0");
    const std::vector<Measurement> ms = ds.measurements();

    std::vector<Vec3> kept;
    Dataset train, rest;
    train.manifest = ds.manifest;
    rest.manifest = ds.manifest;
    const double spacing2 = spacing_m * spacing_m;

    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const Vec3& rx = ms[i].rx;
        bool accept = true;
        for (const Vec3& k : kept) {
            const double dx = rx.x - k.x, dy = rx.y - k.y;
            if (dx * dx + dy * dy < spacing2) {
                accept = false;
                break;
            }
        }
        if (accept) {
            kept.push_back(rx);
            train.records.push_back(ds.records[i]);
        } else {
            rest.records.push_back(ds.records[i]);
        }
    }
    train.manifest.record_count = train.records.size();
    rest.manifest.record_count = rest.records.size();
    return {std::move(train), std::move(rest)};
}

std::pair<Dataset, Dataset> split_random(const Dataset& ds, double train_fraction, Rng& rng) {
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::invalid_argument,
            "train fraction must lie in (0, 1)");
    const std::size_t n = ds.records.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);

    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;

    Dataset train, test;
    train.manifest = ds.manifest;
    test.manifest = ds.manifest;
    for (std::size_t i = 0; i < n; ++i)
        (in_train[i] ? train : test).records.push_back(ds.records[i]);
    train.manifest.record_count = train.records.size();
    test.manifest.record_count = test.records.size();
    return {std::move(train), std::move(test)};
}

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kFlagP0 = 1u << 0;
constexpr std::uint32_t kFlagOrigin = 1u << 1;

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_f64(std::vector<unsigned char>& b, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(b, bits);
}

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;

    void need(std::size_t k) {
        require(pos + k <= n, ErrorCode::format, "model file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

} // namespace

void save_model(const ModelState& model, const std::string& path,
                const std::string& metadata_json) {
    std::vector<unsigned char> buf;
    buf.reserve(64 + metadata_json.size() + model.gaussians.size() * 88 + 4);

    buf.insert(buf.end(), {'P', 'S', 'P', 'L'});
    put_u32(buf, kModelVersion);
    std::uint32_t flags = 0;
    if (model.p0_dbm) flags |= kFlagP0;
    if (model.origin_latlon) flags |= kFlagOrigin;
    put_u32(buf, flags);
    put_u32(buf, static_cast<std::uint32_t>(metadata_json.size()));
    put_u64(buf, model.gaussians.size());
    put_f64(buf, model.frequency_hz);
    put_f64(buf, model.ple);
    put_f64(buf, model.p0_dbm.value_or(0.0));
    put_f64(buf, model.origin_latlon ? (*model.origin_latlon)[0] : 0.0);
    put_f64(buf, model.origin_latlon ? (*model.origin_latlon)[1] : 0.0);
    buf.insert(buf.end(), metadata_json.begin(), metadata_json.end());

    for (const GaussianPrimitive& g : model.gaussians) {
        put_f64(buf, g.center.x);
        put_f64(buf, g.center.y);
        put_f64(buf, g.center.z);
        put_f64(buf, g.log_scale.x);
        put_f64(buf, g.log_scale.y);
        put_f64(buf, g.log_scale.z);
        put_f64(buf, g.rotation.w);
        put_f64(buf, g.rotation.x);
        put_f64(buf, g.rotation.y);
        put_f64(buf, g.rotation.z);
        put_f64(buf, g.offset_db);
    }

    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(out.good(), ErrorCode::io, "write to '" + path + "' failed");
}

ModelState load_model(const std::string& path, std::string* metadata_json) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open '" + path + "' for reading");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

    require(buf.size() >= 68, ErrorCode::format, "model file truncated");
    require(std::memcmp(buf.data(), "PSPL", 4) == 0, ErrorCode::format,
            "not a model file (bad magic)");

    const auto stored_crc = [&] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
        return v;
    }();
    const auto actual_crc = static_cast<std::uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    require(stored_crc == actual_crc, ErrorCode::format, "model file checksum mismatch");

    Reader r{buf.data(), buf.size() - 4, 4};
    const std::uint32_t version = r.u32();
    require(version == kModelVersion, ErrorCode::format,
            "unsupported model file version " + std::to_string(version) + " (expected " +
                std::to_string(kModelVersion) + ")");
    const std::uint32_t flags = r.u32();
    const std::uint32_t meta_len = r.u32();
    const std::uint64_t n = r.u64();

    ModelState model;
    model.frequency_hz = r.f64();
    model.ple = r.f64();
    const double p0 = r.f64();
    const double olat = r.f64();
    const double olon = r.f64();
    if (flags & kFlagP0) model.p0_dbm = p0;
    if (flags & kFlagOrigin) model.origin_latlon = {{olat, olon}};

    r.need(meta_len);
    if (metadata_json)
        metadata_json->assign(reinterpret_cast<const char*>(buf.data() + r.pos), meta_len);
    r.pos += meta_len;

    require(r.n - r.pos == n * 88, ErrorCode::format, "model file truncated");
    model.gaussians.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        GaussianPrimitive& g = model.gaussians[i];
        g.center = {r.f64(), r.f64(), r.f64()};
        g.log_scale = {r.f64(), r.f64(), r.f64()};
        g.rotation = {r.f64(), r.f64(), r.f64(), r.f64()};
        g.offset_db = r.f64();
    }
    return model;
}

std::uint32_t file_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io, "cannot open '" + path + "' for reading");
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    char chunk[65536];
    while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
        crc = static_cast<std::uint32_t>(crc32(
            crc, reinterpret_cast<const Bytef*>(chunk), static_cast<uInt>(in.gcount())));
        if (!in) break;
    }
    return crc;
}

} // namespace propsplat
