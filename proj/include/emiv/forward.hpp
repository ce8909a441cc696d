#pragma once

/// @brief Multi-cycle MIMO measurement synthesis.
///
/// Each cycle places the target at its trajectory center; the field problem is
/// solved in the target frame on a compact per-frequency grid (the contrast
/// raster is then identical across cycles, so one factorization per frequency
/// serves them all).  The incident field is the analytic line source of the
/// true transmitter position, the scattered field solves the contrast-source
/// Helmholtz problem, and receiver samples radiate analytically from the
/// target cells.  This equals total-minus-incident at the receivers while
/// keeping every propagation path outside the grid exact.

#include <cstdint>

#include "emiv/fdfd.hpp"
#include "emiv/meas.hpp"
#include "emiv/scene.hpp"

namespace emiv {

/// Compact target-frame synthesis grid for one frequency.
struct SynthPlan {
    Grid2D grid;  // odd dimensions, cell-centered on the target origin
    PmlSpec pml;
    double freqHz = 0.0;
};

/// Radius of the smallest origin-centered circle covering every disc.
double target_support_radius(const SceneConfig& s);

/// Per-frequency grid sizing: pitch λ0/64 clamped to [0.004 m, 0.02 m], an
/// absorber of ~λ0/4 and a clear margin of ~0.15·λ0 around the support, so
/// points-per-wavelength and absorber thickness stay uniform across the band.
SynthPlan plan_synth_grid(double freqHz, double supportRadius);

/// Synthesizes the noiseless scattered-field tensor over the union of the
/// scene's frequency lists (every cycle, transmitter, receiver).
MeasurementSet synth_measurements(const SceneConfig& scene);

/// Same record generated through the inversion's own operator family on the
/// reconstruction raster (inverse-crime data, for algorithm validation).
MeasurementSet crime_measurements(const SceneConfig& scene);

/// Adds circular complex Gaussian noise per (cycle, frequency, transmitter)
/// with power set against that view's mean receiver data power.  snrDb = +inf
/// returns the input unchanged; fixed seeds give bitwise-identical outputs.
MeasurementSet add_noise(const MeasurementSet& meas, double snrDb, std::uint64_t seed);

}  // namespace emiv
