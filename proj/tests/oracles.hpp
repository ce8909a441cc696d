#pragma once

// Independent reference implementations used only by the test suite.
//
// Everything here is deliberately written from first principles against GSL
// special functions, so the library under test and its oracle share no code:
// the library evaluates Hankel kernels through the libstdc++ cyl_bessel_j /
// cyl_neumann route, while this header goes through gsl_sf_bessel_*.
// Tolerances in the tests assume these oracles are good to ~1e-12 relative.

#include <gsl/gsl_sf_bessel.h>

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

inline constexpr double kC0 = 299792458.0;
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kMu0 = 4.0 * kPi * 1.0e-7;
inline constexpr double kEps0 = 1.0 / (kMu0 * kC0 * kC0);

// ---------------------------------------------------------------------------
// Hankel functions of the second kind, integer order, via GSL.

inline cplx hankel2(int n, double x) {
    return {gsl_sf_bessel_Jn(n, x), -gsl_sf_bessel_Yn(n, x)};
}

// d/dx C_n(x) = C_{n-1}(x) - (n/x) C_n(x), valid for J, Y and both Hankels.
inline cplx hankel2_deriv(int n, double x) {
    return hankel2(n - 1, x) - (static_cast<double>(n) / x) * hankel2(n, x);
}

inline double besselj_deriv(int n, double x) {
    return gsl_sf_bessel_Jn(n - 1, x) - (static_cast<double>(n) / x) * gsl_sf_bessel_Jn(n, x);
}

// Unit-transmitter line-source field under the e^{+iωt} convention:
// amp(ω) · H0^(2)(k r) with amp = −i ω μ0 / 4, i.e. (iωμ0/4)·H0^(1)(−kr)
// rewritten through the analytic continuation H0^(1)(e^{iπ}x) = −H0^(2)(x).
inline cplx line_source_amp(double omega) { return cplx(0.0, -omega * kMu0 / 4.0); }

inline cplx line_source_field(double omega, double r) {
    return line_source_amp(omega) * hankel2(0, (omega / kC0) * r);
}

// ---------------------------------------------------------------------------
// Scattering of a line source by a homogeneous lossless dielectric cylinder.
//
// Cylinder of radius a and relative permittivity epsR centered at the origin;
// unit transmitter at src (|src| > a).  TM polarization: E_z and dE_z/dr
// continuous at r = a.  Series in cylindrical harmonics about the origin,
// folded over ±n; all radial factors real-argument (lossless media only).

struct CylinderScene {
    double epsR = 3.0;   // interior relative permittivity
    double radius = 0.06;  // m
    double freqHz = 0.5e9;
    int maxOrder = 30;
};

namespace detail {

// Reflection ratio R_n: scattered series coefficient is H_n^(2)(k rs) · R_n.
inline cplx cylinder_ratio(const CylinderScene& s, int n) {
    const double k = 2.0 * kPi * s.freqHz / kC0;
    const double k1 = k * std::sqrt(s.epsR);
    const double ka = k * s.radius;
    const double k1a = k1 * s.radius;
    const double jn = gsl_sf_bessel_Jn(n, ka);
    const double jn1 = gsl_sf_bessel_Jn(n, k1a);
    const double djn = besselj_deriv(n, ka);
    const double djn1 = besselj_deriv(n, k1a);
    const cplx hn = hankel2(n, ka);
    const cplx dhn = hankel2_deriv(n, ka);
    const cplx num = k1 * djn1 * jn - k * jn1 * djn;
    const cplx den = k1 * djn1 * hn - k * jn1 * dhn;
    return -num / den;
}

// Interior coefficient: field inside is amp · d_n · J_n(k1 r) e^{inΔφ}.
inline cplx cylinder_interior_coeff(const CylinderScene& s, int n, double krs) {
    const double k = 2.0 * kPi * s.freqHz / kC0;
    const double ka = k * s.radius;
    const double k1a = ka * std::sqrt(s.epsR);
    const cplx cn = hankel2(n, krs) * cylinder_ratio(s, n);
    return (gsl_sf_bessel_Jn(n, ka) * hankel2(n, krs) + cn * hankel2(n, ka)) /
           gsl_sf_bessel_Jn(n, k1a);
}

}  // namespace detail

// Scattered field at obs (must satisfy |obs| > a); src strictly outside.
inline cplx cylinder_scattered(const CylinderScene& s, double srcX, double srcY, double obsX,
                               double obsY) {
    const double k = 2.0 * kPi * s.freqHz / kC0;
    const double rs = std::hypot(srcX, srcY);
    const double ro = std::hypot(obsX, obsY);
    const double dphi = std::atan2(obsY, obsX) - std::atan2(srcY, srcX);
    cplx sum = 0.0;
    for (int n = s.maxOrder; n >= 1; --n) {  // small terms first
        const cplx tn = hankel2(n, k * rs) * detail::cylinder_ratio(s, n) * hankel2(n, k * ro);
        sum += 2.0 * std::cos(n * dphi) * tn;
    }
    sum += hankel2(0, k * rs) * detail::cylinder_ratio(s, 0) * hankel2(0, k * ro);
    const double omega = 2.0 * kPi * s.freqHz;
    return line_source_amp(omega) * sum;
}

// Total field anywhere off the source point (interior or exterior).
inline cplx cylinder_total(const CylinderScene& s, double srcX, double srcY, double obsX,
                           double obsY) {
    const double omega = 2.0 * kPi * s.freqHz;
    const double k = omega / kC0;
    const double k1 = k * std::sqrt(s.epsR);
    const double rs = std::hypot(srcX, srcY);
    const double ro = std::hypot(obsX, obsY);
    const double dphi = std::atan2(obsY, obsX) - std::atan2(srcY, srcX);
    if (ro >= s.radius) {
        const double dx = obsX - srcX, dy = obsY - srcY;
        const cplx inc = line_source_field(omega, std::hypot(dx, dy));
        return inc + cylinder_scattered(s, srcX, srcY, obsX, obsY);
    }
    cplx sum = 0.0;
    for (int n = s.maxOrder; n >= 1; --n) {
        const cplx tn =
            detail::cylinder_interior_coeff(s, n, k * rs) * gsl_sf_bessel_Jn(n, k1 * ro);
        sum += 2.0 * std::cos(n * dphi) * tn;
    }
    sum += detail::cylinder_interior_coeff(s, 0, k * rs) * gsl_sf_bessel_Jn(0, k1 * ro);
    return line_source_amp(omega) * sum;
}

// Incident-field series (addition theorem), used to self-check the machinery
// against the closed form line_source_field.
inline cplx cylinder_incident_series(const CylinderScene& s, double srcX, double srcY, double obsX,
                                     double obsY) {
    const double omega = 2.0 * kPi * s.freqHz;
    const double k = omega / kC0;
    const double rs = std::hypot(srcX, srcY);
    const double ro = std::hypot(obsX, obsY);
    const double rLo = std::min(rs, ro), rHi = std::max(rs, ro);
    const double dphi = std::atan2(obsY, obsX) - std::atan2(srcY, srcX);
    cplx sum = 0.0;
    for (int n = s.maxOrder; n >= 1; --n) {
        const cplx tn = gsl_sf_bessel_Jn(n, k * rLo) * hankel2(n, k * rHi);
        sum += 2.0 * std::cos(n * dphi) * tn;
    }
    sum += gsl_sf_bessel_Jn(0, k * rLo) * hankel2(0, k * rHi);
    return line_source_amp(omega) * sum;
}

// ---------------------------------------------------------------------------
// Scalar optimization / calculus oracles.

// Golden-section search for the minimizer of a unimodal f on [lo, hi].
inline double golden_minimize(const std::function<double(double)>& f, double lo, double hi,
                              double tol = 1e-12, int maxIter = 200) {
    const double invPhi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invPhi * (b - a);
    double d = a + invPhi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < maxIter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invPhi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// Central difference d/dt f(t) at t = 0.
inline double central_diff(const std::function<double(double)>& f, double step) {
    return (f(step) - f(-step)) / (2.0 * step);
}

// Mean of |v|^2 over a vector — used by the Monte-Carlo SNR checks.
inline double mean_power(const std::vector<cplx>& v) {
    double acc = 0.0;
    for (const cplx& z : v) acc += std::norm(z);
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace oracle
