#include "emiv/hankel.hpp"

#include <cmath>

namespace emiv {

cplx hankel2_0(double x) { return {std::cyl_bessel_j(0.0, x), -std::cyl_neumann(0.0, x)}; }

cplx hankel2_1(double x) { return {std::cyl_bessel_j(1.0, x), -std::cyl_neumann(1.0, x)}; }

cplx line_source(double omega, double r) {
    const cplx amp(0.0, -omega * mu0 / 4.0);
    return amp * hankel2_0((omega / c0) * r);
}

cplx line_source_cell(double omega, double pitch, double r) {
    if (r >= 0.5 * pitch) return line_source(omega, r);
    // Average of H0^(2)(k·) over the equal-area disc of radius a = pitch/√π:
    //   (2/(ka)²)·[ka·H1^(2)(ka) − 2i/π],
    // from ∫0^x u·H0(u) du = x·H1(x) − 2i/π (the −2i/π is the Y1 limit term).
    const double a = pitch / std::sqrt(pi);
    const double ka = (omega / c0) * a;
    const cplx avg = (2.0 / (ka * ka)) * (ka * hankel2_1(ka) - cplx(0.0, 2.0 / pi));
    const cplx amp(0.0, -omega * mu0 / 4.0);
    return amp * avg;
}

double operator_weight(double omega, double pitch) { return omega * eps0 * pitch * pitch; }

cplx sensing_kernel(double omega, double pitch, double r) {
    return operator_weight(omega, pitch) * line_source_cell(omega, pitch, r);
}

}  // namespace emiv
