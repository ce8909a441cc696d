#pragma once

#include <map>
#include <string>
#include <vector>

#include "emiv/bp.hpp"
#include "emiv/grid.hpp"
#include "emiv/meas.hpp"

namespace emiv {

// All writers are deterministic: identical inputs produce identical bytes.
// Binary payloads are little-endian float64, row-major with x fastest.

/// Grid container ("EMIV-GRID/1"). Exactly one of the payload vectors is used.
struct GridFile {
    Grid2D grid;
    bool isComplex = false;
    std::vector<double> realValues;
    std::vector<cplx> complexValues;
};

void write_grid(const std::string& path, const GridFile& gf);
GridFile read_grid(const std::string& path);

void write_grid_real(const std::string& path, const Grid2D& grid, const std::vector<double>& v);
void write_grid_complex(const std::string& path, const Grid2D& grid, const std::vector<cplx>& v);

/// Snapshot container: complex grid file plus a sidecar
/// (<path>.manifest.json) carrying the cycle index and frequency list, which
/// registration needs to bound the image's spectral support.
void write_bp_image(const std::string& path, const BpImage& img);
BpImage read_bp_image(const std::string& path);

/// Measurement container ("EMIV-MEAS/1") plus its structured-text sidecar
/// (<path>.manifest.json) carrying scene hash, SNR, seed and frequency list.
void write_measurements(const std::string& path, const MeasurementSet& ms);
MeasurementSet read_measurements(const std::string& path);

/// Shift documents ("emiv-shifts/1"). refCycle is stored 1-based on disk.
void write_shifts(const std::string& path, const ShiftSet& ss);
ShiftSet read_shifts(const std::string& path);

/// Run manifest ("emiv-manifest/1"). `timestamp` stays empty unless the
/// EMIV_TIMESTAMPS=1 opt-in is set, keeping default outputs reproducible.
struct RunManifest {
    std::string tool;                              ///< subcommand name
    std::string toolVersion;
    std::string configHash;                        ///< scene document hash
    std::map<std::string, std::string> inputHashes;
    std::map<std::string, std::string> flags;
    std::uint64_t seed = 0;
    std::string timestamp;
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

/// 8-bit binary PGM quick-look of |values|, normalized to the max; rows are
/// written top-down (largest y first).
void write_pgm(const std::string& path, const Grid2D& grid, const std::vector<double>& values);
void write_pgm_complex(const std::string& path, const Grid2D& grid, const std::vector<cplx>& values);

/// SHA-256 content hashing for provenance records.
std::string sha256_hex(const void* data, std::size_t n);
std::string sha256_hex(const std::string& s);
std::string hash_artifact(const std::string& path);

/// Decimal formatting with 9 significant digits (report CSV contract).
std::string format_sig9(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace emiv
