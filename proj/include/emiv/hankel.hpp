#pragma once

/// @brief Outgoing-wave Green kernels for the 2-D Helmholtz equation.
///
/// Everything radiating in this codebase uses the e^{+iωt} time convention,
/// under which the outgoing cylindrical wave is the Hankel function of the
/// second kind.  The textbook form (iωμ0/4)·H0^(1)(−kr) is evaluated through
/// the analytic continuation H0^(1)(e^{iπ}x) = −H0^(2)(x), so the kernel
/// actually computed is −(iωμ0/4)·H0^(2)(kr); the two forms are equal.

#include "emiv/constants.hpp"

namespace emiv {

/// H0^(2)(x) = J0(x) − i·Y0(x), x > 0.
cplx hankel2_0(double x);

/// H1^(2)(x) = J1(x) − i·Y1(x), x > 0.
cplx hankel2_1(double x);

/// Field of a unit transmitter at distance r > 0: −(iωμ0/4)·H0^(2)(kr).
cplx line_source(double omega, double r);

/// Same kernel with the singularity regularized: for r < pitch/2 the point
/// value is replaced by the analytic average of the kernel over a disc of
/// area pitch², the standard self-cell treatment.  Covers both the true
/// self-cell (r = 0) and receivers that graze a cell center.
cplx line_source_cell(double omega, double pitch, double r);

/// Quadrature/source weight that converts the line-source kernel into a
/// data/state operator entry on a grid of the given pitch: ω·ε0·pitch².
double operator_weight(double omega, double pitch);

/// Sensing/radiation operator entry at distance r: operator_weight times the
/// regularized kernel.  Used by measurement synthesis and the inversion's
/// sensing matrices alike so the two sides share one discrete radiation rule.
cplx sensing_kernel(double omega, double pitch, double r);

}  // namespace emiv
