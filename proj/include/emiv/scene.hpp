#pragma once

#include <string>
#include <vector>

#include "emiv/grid.hpp"
#include "emiv/meas.hpp"

namespace emiv {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Transmit/receive element positions [m], fixed in the lab frame.
struct ArrayLayout {
    std::vector<Vec2> tx;
    std::vector<Vec2> rx;
};

/// @brief Stop-go-stop trajectory: target center per measurement cycle.
/// refCycle is 0-based internally (serialized 1-based).
struct Trajectory {
    std::vector<double> x;
    std::vector<double> y;
    int refCycle = 0;

    int cycles() const { return static_cast<int>(x.size()); }
    /// Relative displacement of cycle m against the reference cycle.
    Vec2 displacement(int m) const { return {x[m] - x[refCycle], y[m] - y[refCycle]}; }
};

/// Acquisition frequency lists [Hz], ascending. Synthesis covers the union;
/// imaging uses `bp`, reconstruction uses `inversion`.
struct FrequencyPlan {
    std::vector<double> bp;
    std::vector<double> inversion;

    std::vector<double> unionList() const;
};

/// Homogeneous disc of the target template, centered relative to the
/// instantaneous target center.
struct Disc {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    double dEps = 0.0;   ///< eps_r - eps_r,bg inside the disc
    double sigma = 0.0;  ///< conductivity inside the disc [S/m]
};

struct SceneConfig {
    std::string name;
    double bgEpsR = 1.0;
    double bgSigma = 0.0;
    Grid2D grid;             ///< full computational domain (bookkeeping raster)
    Grid2D inversionDomain;  ///< default reconstruction raster, centered on the reference position
    std::vector<Disc> discs;
    ArrayLayout arrays;
    Trajectory trajectory;
    FrequencyPlan freqs;
};

/// Replica of the three-disc benchmark: eps_r = 3 lossless discs of radius
/// 0.06 m on an equilateral triangle of circumradius 0.12 m, a 7-element Tx /
/// 15-element Rx ring of radius 2.45 m, and a 7-cycle diagonal trajectory.
SceneConfig make_tridisc_scene();

/// Returns human-readable violations; empty means the scene is usable.
std::vector<std::string> validate_scene(const SceneConfig& s);

/// validate_scene that throws a validation error listing every violation.
void require_valid_scene(const SceneConfig& s);

/// Canonical "emiv-scene/1" document. serialize(parse(x)) is byte-identical.
std::string serialize_scene(const SceneConfig& s);
SceneConfig parse_scene(const std::string& text);
SceneConfig load_scene(const std::string& path);
void save_scene(const std::string& path, const SceneConfig& s);

/// SHA-256 of the canonical scene document.
std::string scene_hash(const SceneConfig& s);

/// @brief Rasterize the target template onto `raster`, with the template
/// center placed at (centerX, centerY). Cells cut by a disc boundary get
/// area-weighted contrast (32x32 subcell coverage count).
ContrastMap rasterize_target(const SceneConfig& s, const Grid2D& raster,
                             double centerX, double centerY);

/// Ideal per-cycle displacements from the scene trajectory (quality = 1).
ShiftSet true_shifts(const SceneConfig& s);

}  // namespace emiv
