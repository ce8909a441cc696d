#pragma once

/// @brief Subpixel phase-correlation registration of BP snapshots.
///
/// Registration runs on magnitude images with a raised-cosine edge window to
/// suppress wrap-around leakage.  phase_correlate(A, B) returns the shift s,
/// in pixels, by which B is displaced relative to A: B(x) ≈ A(x − s).  With
/// snapshots that track a moving target, registering the reference image
/// against cycle m therefore yields the target displacement (x_m − x_c).

#include <vector>

#include "emiv/bp.hpp"
#include "emiv/meas.hpp"
#include "emiv/scene.hpp"

namespace emiv {

struct PixelShift {
    double dxPx = 0.0;
    double dyPx = 0.0;
    double quality = 0.0;  // correlation peak / surface energy, in [0, 1]
};

/// Normalized cross-power phase correlation with separable 3-point parabolic
/// subpixel refinement.  Both images must share one raster.
PixelShift phase_correlate(const BpImage& a, const BpImage& b);

/// Registers every cycle against the reference cycle (0-based) and converts
/// pixel shifts to meters.  shifts[refCycle] is exactly zero.  Estimates with
/// quality below 0.03 are flagged via the returned qualities; callers decide
/// whether to warn.
ShiftSet estimate_trajectory(const std::vector<BpImage>& images, int refCycle);

/// Equivalent relative transceiver positions for cycle m: every Tx and Rx is
/// translated by −(dx[m], dy[m]), mapping world geometry into the reference
/// frame in which the target appears stationary.
ArrayLayout compensate_positions(const ArrayLayout& arrays, const ShiftSet& shifts, int m);

}  // namespace emiv
