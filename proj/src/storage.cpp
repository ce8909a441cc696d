#include "emiv/storage.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <openssl/evp.h>

#include <json.hpp>

namespace emiv {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kGridMagic[] = "EMIV-GRID/1\n";
constexpr char kMeasMagic[] = "EMIV-MEAS/1\n";

void put_bytes(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ofstream& os, std::uint32_t v) { put_bytes(os, &v, 4); }
void put_f64(std::ofstream& os, double v) { put_bytes(os, &v, 8); }

void get_bytes(std::ifstream& is, void* p, std::size_t n, const std::string& path) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) fail_io(path + ": truncated file");
}

std::uint32_t get_u32(std::ifstream& is, const std::string& path) {
    std::uint32_t v = 0;
    get_bytes(is, &v, 4, path);
    return v;
}

double get_f64(std::ifstream& is, const std::string& path) {
    double v = 0;
    get_bytes(is, &v, 8, path);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail_io(path + ": cannot open for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_io(path + ": cannot open");
    return is;
}

void expect_magic(std::ifstream& is, const char* magic, const std::string& path) {
    std::size_t n = std::strlen(magic);
    std::string got(n, '\0');
    is.read(got.data(), static_cast<std::streamsize>(n));
    if (!is || got != magic) fail_io(path + ": bad magic");
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json parse_json(const std::string& text, const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail_io(path + ": malformed JSON");
    return j;
}

nlohmann::json snr_to_json(double snrDb) {
    if (std::isinf(snrDb)) return "inf";
    return snrDb;
}

double snr_from_json(const nlohmann::json& j, const std::string& path) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        fail_io(path + ": unrecognized snr_db value");
    }
    return j.get<double>();
}

}  // namespace

void write_grid(const std::string& path, const GridFile& gf) {
    check_grid(gf.grid, "write_grid");
    std::size_t n = static_cast<std::size_t>(gf.grid.cells());
    if (gf.isComplex ? gf.complexValues.size() != n : gf.realValues.size() != n)
        fail_validation("write_grid: payload size does not match raster");
    auto os = open_out(path);
    put_bytes(os, kGridMagic, std::strlen(kGridMagic));
    put_u32(os, gf.isComplex ? 1u : 0u);
    put_u32(os, static_cast<std::uint32_t>(gf.grid.nx));
    put_u32(os, static_cast<std::uint32_t>(gf.grid.ny));
    put_f64(os, gf.grid.originX);
    put_f64(os, gf.grid.originY);
    put_f64(os, gf.grid.pitch);
    if (gf.isComplex)
        put_bytes(os, gf.complexValues.data(), n * sizeof(cplx));
    else
        put_bytes(os, gf.realValues.data(), n * sizeof(double));
    if (!os) fail_io(path + ": write failed");
}

GridFile read_grid(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, kGridMagic, path);
    GridFile gf;
    std::uint32_t kind = get_u32(is, path);
    if (kind > 1) fail_io(path + ": unknown element kind");
    gf.isComplex = kind == 1;
    gf.grid.nx = static_cast<int>(get_u32(is, path));
    gf.grid.ny = static_cast<int>(get_u32(is, path));
    gf.grid.originX = get_f64(is, path);
    gf.grid.originY = get_f64(is, path);
    gf.grid.pitch = get_f64(is, path);
    if (gf.grid.nx < 1 || gf.grid.ny < 1 || !(gf.grid.pitch > 0.0))
        fail_io(path + ": invalid raster header");
    std::size_t n = static_cast<std::size_t>(gf.grid.cells());
    if (gf.isComplex) {
        gf.complexValues.resize(n);
        get_bytes(is, gf.complexValues.data(), n * sizeof(cplx), path);
    } else {
        gf.realValues.resize(n);
        get_bytes(is, gf.realValues.data(), n * sizeof(double), path);
    }
    return gf;
}

void write_grid_real(const std::string& path, const Grid2D& grid, const std::vector<double>& v) {
    GridFile gf;
    gf.grid = grid;
    gf.isComplex = false;
    gf.realValues = v;
    write_grid(path, gf);
}

void write_grid_complex(const std::string& path, const Grid2D& grid, const std::vector<cplx>& v) {
    GridFile gf;
    gf.grid = grid;
    gf.isComplex = true;
    gf.complexValues = v;
    write_grid(path, gf);
}

void write_bp_image(const std::string& path, const BpImage& img) {
    write_grid_complex(path, img.raster, img.values);
    nlohmann::json j;
    j["schema"] = "emiv-bp-manifest/1";
    j["cycle"] = img.cycle + 1;  // 1-based on disk
    j["frequencies_hz"] = img.freqsHz;
    write_text_file(path + ".manifest.json", dump_json(j));
}

BpImage read_bp_image(const std::string& path) {
    GridFile gf = read_grid(path);
    if (!gf.isComplex) fail_validation(path + ": snapshot grids must be complex");
    BpImage img;
    img.raster = gf.grid;
    img.values = std::move(gf.complexValues);

    const std::string side = path + ".manifest.json";
    nlohmann::json j = parse_json(read_text_file(side), side);
    if (j.value("schema", "") != "emiv-bp-manifest/1")
        fail_validation(side + ": not an emiv-bp-manifest/1 document");
    img.cycle = j.value("cycle", 1) - 1;
    if (j.contains("frequencies_hz"))
        img.freqsHz = j["frequencies_hz"].get<std::vector<double>>();
    return img;
}

void write_measurements(const std::string& path, const MeasurementSet& ms) {
    if (ms.data.size() != ms.count()) fail_validation("write_measurements: payload size mismatch");
    auto os = open_out(path);
    put_bytes(os, kMeasMagic, std::strlen(kMeasMagic));
    put_u32(os, static_cast<std::uint32_t>(ms.cycles));
    put_u32(os, static_cast<std::uint32_t>(ms.freqCount()));
    put_u32(os, static_cast<std::uint32_t>(ms.txCount));
    put_u32(os, static_cast<std::uint32_t>(ms.rxCount));
    put_bytes(os, ms.data.data(), ms.data.size() * sizeof(cplx));
    if (!os) fail_io(path + ": write failed");

    nlohmann::json j;
    j["schema"] = "emiv-meas-manifest/1";
    j["scene_hash"] = ms.sceneHash;
    j["snr_db"] = snr_to_json(ms.snrDb);
    j["seed"] = ms.seed;
    j["frequencies_hz"] = ms.freqsHz;
    j["cycles"] = ms.cycles;
    j["tx_count"] = ms.txCount;
    j["rx_count"] = ms.rxCount;
    j["crime_mode"] = ms.crimeMode;
    write_text_file(path + ".manifest.json", dump_json(j));
}

MeasurementSet read_measurements(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, kMeasMagic, path);
    MeasurementSet ms;
    ms.cycles = static_cast<int>(get_u32(is, path));
    std::uint32_t nf = get_u32(is, path);
    ms.txCount = static_cast<int>(get_u32(is, path));
    ms.rxCount = static_cast<int>(get_u32(is, path));
    if (ms.cycles < 1 || nf < 1 || ms.txCount < 1 || ms.rxCount < 1)
        fail_io(path + ": invalid dimension tuple");
    ms.freqsHz.resize(nf);
    ms.data.resize(ms.count());
    get_bytes(is, ms.data.data(), ms.data.size() * sizeof(cplx), path);

    std::string side = path + ".manifest.json";
    nlohmann::json j = parse_json(read_text_file(side), side);
    if (j.value("schema", "") != "emiv-meas-manifest/1") fail_io(side + ": wrong schema");
    auto freqs = j.at("frequencies_hz").get<std::vector<double>>();
    if (freqs.size() != nf) fail_io(side + ": frequency list does not match dimension tuple");
    ms.freqsHz = freqs;
    ms.sceneHash = j.value("scene_hash", "");
    ms.snrDb = snr_from_json(j.at("snr_db"), side);
    ms.seed = j.value("seed", std::uint64_t{0});
    ms.crimeMode = j.value("crime_mode", false);
    return ms;
}

void write_shifts(const std::string& path, const ShiftSet& ss) {
    nlohmann::json j;
    j["schema"] = "emiv-shifts/1";
    j["reference_cycle"] = ss.refCycle + 1;  // 1-based on disk
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : ss.shifts) {
        nlohmann::json e;
        e["dx_m"] = s.dx;
        e["dy_m"] = s.dy;
        e["quality"] = s.quality;
        arr.push_back(e);
    }
    j["shifts"] = arr;
    write_text_file(path, dump_json(j));
}

ShiftSet read_shifts(const std::string& path) {
    nlohmann::json j = parse_json(read_text_file(path), path);
    if (j.value("schema", "") != "emiv-shifts/1") fail_io(path + ": wrong schema");
    ShiftSet ss;
    ss.refCycle = j.at("reference_cycle").get<int>() - 1;
    for (const auto& e : j.at("shifts")) {
        ShiftEstimate s;
        s.dx = e.at("dx_m").get<double>();
        s.dy = e.at("dy_m").get<double>();
        s.quality = e.value("quality", 0.0);
        ss.shifts.push_back(s);
    }
    if (ss.refCycle < 0 || ss.refCycle >= static_cast<int>(ss.shifts.size()))
        fail_io(path + ": reference cycle out of range");
    return ss;
}

void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["schema"] = "emiv-manifest/1";
    j["tool"] = m.tool;
    j["tool_version"] = m.toolVersion;
    j["config_hash"] = m.configHash;
    j["input_hashes"] = m.inputHashes;
    j["flags"] = m.flags;
    j["seed"] = m.seed;
    j["timestamp"] = m.timestamp;
    write_text_file(path, dump_json(j));
}

RunManifest read_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail_io(path + ": " + e.what());
    }
    if (j.value("schema", "") != "emiv-manifest/1")
        fail_validation(path + ": not an emiv-manifest/1 document");
    RunManifest m;
    m.tool = j.value("tool", "");
    m.toolVersion = j.value("tool_version", "");
    m.configHash = j.value("config_hash", "");
    if (j.contains("input_hashes"))
        m.inputHashes = j["input_hashes"].get<std::map<std::string, std::string>>();
    if (j.contains("flags"))
        m.flags = j["flags"].get<std::map<std::string, std::string>>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.timestamp = j.value("timestamp", "");
    return m;
}

void write_pgm(const std::string& path, const Grid2D& grid, const std::vector<double>& values) {
    check_grid(grid, "write_pgm");
    if (values.size() != static_cast<std::size_t>(grid.cells()))
        fail_validation("write_pgm: payload size mismatch");
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    auto os = open_out(path);
    char header[64];
    std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", grid.nx, grid.ny);
    put_bytes(os, header, std::strlen(header));
    std::vector<unsigned char> row(static_cast<std::size_t>(grid.nx));
    for (int iy = grid.ny - 1; iy >= 0; --iy) {  // top-down: largest y first
        for (int ix = 0; ix < grid.nx; ++ix) {
            double v = peak > 0.0 ? std::abs(values[grid.index(ix, iy)]) / peak : 0.0;
            row[static_cast<std::size_t>(ix)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
        put_bytes(os, row.data(), row.size());
    }
    if (!os) fail_io(path + ": write failed");
}

void write_pgm_complex(const std::string& path, const Grid2D& grid, const std::vector<cplx>& values) {
    std::vector<double> mag(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mag[i] = std::abs(values[i]);
    write_pgm(path, grid, mag);
}

std::string sha256_hex(const void* data, std::size_t n) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1)
        fail_numerical("sha256: digest failure");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string hash_artifact(const std::string& path) { return sha256_hex(read_text_file(path)); }

std::string format_sig9(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    auto is = open_in(path);
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (is.bad()) fail_io(path + ": read failed");
    return content;
}

void write_text_file(const std::string& path, const std::string& content) {
    auto os = open_out(path);
    put_bytes(os, content.data(), content.size());
    if (!os) fail_io(path + ": write failed");
}

}  // namespace emiv
