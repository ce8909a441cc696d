#pragma once

/// @brief Frequency-domain back-projection imaging of MIMO scattered data.
///
/// Each cycle's snapshot is the matched-filter sum
///   I(r) = (1/(F·P·Q)) Σ_ω Σ_p Σ_q f[m][ω][p][q] · exp(+i k(ω)(‖t_p − r‖ + ‖r − x_q‖)),
/// which compensates the round-trip propagation phase of the forward
/// convention (outgoing waves carry exp(−ikr)).  Accumulation order is fixed
/// (ω, p, q) so images are bitwise reproducible at any thread count.

#include <array>
#include <vector>

#include "emiv/grid.hpp"
#include "emiv/meas.hpp"
#include "emiv/scene.hpp"

namespace emiv {

struct BpImage {
    Grid2D raster;
    std::vector<cplx> values;  // complex image, |.| is the snapshot
    int cycle = 0;             // 0-based cycle index
    std::vector<double> freqsHz;
};

/// The fixed snapshot raster shared by all cycles of a run: pitch 0.0125 m
/// covering [−0.9, 0.9] × [−0.6, 0.6] m (inclusive endpoints).
Grid2D default_bp_raster();

/// Back-projects one cycle of the measurement set onto the raster using the
/// scene's BP frequency list (entries must exist in meas.freqsHz).
BpImage backproject(const MeasurementSet& meas, int cycle, const SceneConfig& scene,
                    const Grid2D& raster);

/// One image per cycle on a shared raster.
std::vector<BpImage> bp_all_cycles(const MeasurementSet& meas, const SceneConfig& scene,
                                   const Grid2D& raster);

/// Axis-aligned box (x0, y0, x1, y1) of the image pixels within −10 dB of the
/// peak magnitude, dilated by `dilatePixels` on every side (clipped to the
/// raster).  This is how the reference-cycle snapshot proposes an inversion
/// domain when none is given explicitly.
std::array<double, 4> bp_blob_box(const BpImage& img, double dropDb = 10.0,
                                  int dilatePixels = 4);

}  // namespace emiv
