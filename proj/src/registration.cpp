#include "emiv/registration.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "emiv/constants.hpp"
#include "emiv/errors.hpp"

#include "fftw_lock.hpp"

namespace emiv {

namespace {

constexpr double kCrossPowerFloor = 1e-12;
constexpr double kParabolaFloor = 1e-30;
constexpr int kEdgeTaperCells = 8;
constexpr double kBandGuard = 1.1;  // spectral mask radius / (2 k_max)

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};
using FftwBuf = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuf alloc_buf(std::size_t n) {
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (p == nullptr) fail_numerical("registration: fftw_malloc failed");
    return FftwBuf(p);
}

/// Raised-cosine ramp over a fixed number of edge cells, flat in the
/// interior.  Suppresses the periodic-extension discontinuity without
/// tapering targets that approach the raster boundary.
std::vector<double> edge_window(int n) {
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    const int taper = std::min(n / 2, kEdgeTaperCells);
    for (int i = 0; i < taper; ++i) {
        const double t = 0.5 * (1.0 - std::cos(std::numbers::pi * (i + 0.5) / taper));
        w[static_cast<std::size_t>(i)] = t;
        w[static_cast<std::size_t>(n - 1 - i)] = t;
    }
    return w;
}

/// Windowed magnitude of a snapshot, packed into an FFTW buffer.  The median
/// magnitude is subtracted first (clamped at zero): the rectified noise
/// pedestal is common to both images of a pair and would otherwise bias the
/// correlation peak toward zero shift.
void load_magnitude(const BpImage& img, const std::vector<double>& wx,
                    const std::vector<double>& wy, fftw_complex* out) {
    const int nx = img.raster.nx;
    const int ny = img.raster.ny;
    std::vector<double> mag(img.values.size());
    for (std::size_t c = 0; c < img.values.size(); ++c) mag[c] = std::abs(img.values[c]);
    std::vector<double> sorted = mag;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double floor = sorted[sorted.size() / 2];

    double total = 0.0;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const std::size_t c = img.raster.index(ix, iy);
            const double v = std::max(0.0, mag[c] - floor) * wx[static_cast<std::size_t>(ix)] *
                             wy[static_cast<std::size_t>(iy)];
            out[c][0] = v;
            out[c][1] = 0.0;
            total += v;
        }
    }
    if (!(total > 0.0))
        fail_validation("phase_correlate: degenerate image (zero or constant magnitude)");
}

/// Radius of the image's spectral support: BP round-trip phase history spans
/// |kappa| <= 2 k(f_max), padded by a small guard.  Images without a
/// frequency list get no mask.
double band_limit(const BpImage& a, const BpImage& b) {
    double fmax = 0.0;
    for (double f : a.freqsHz) fmax = std::max(fmax, f);
    for (double f : b.freqsHz) fmax = std::max(fmax, f);
    if (!(fmax > 0.0)) return std::numeric_limits<double>::infinity();
    return kBandGuard * 2.0 * (2.0 * std::numbers::pi * fmax / c0);
}

/// 3-point parabolic vertex offset in [-0.5, 0.5]; 0 when the curvature is
/// numerically flat.
double parabolic_offset(double sm, double s0, double sp) {
    const double den = sm - 2.0 * s0 + sp;
    if (std::abs(den) < kParabolaFloor) return 0.0;
    const double d = 0.5 * (sm - sp) / den;
    return std::clamp(d, -0.5, 0.5);
}

}  // namespace

PixelShift phase_correlate(const BpImage& a, const BpImage& b) {
    check_grid(a.raster, "phase_correlate");
    if (a.raster.nx != b.raster.nx || a.raster.ny != b.raster.ny ||
        a.raster.pitch != b.raster.pitch)
        fail_validation("phase_correlate: images use different rasters");
    const int nx = a.raster.nx;
    const int ny = a.raster.ny;
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    if (a.values.size() != n || b.values.size() != n)
        fail_validation("phase_correlate: image size does not match raster");

    FftwBuf bufA = alloc_buf(n);
    FftwBuf bufB = alloc_buf(n);
    FftwBuf surf = alloc_buf(n);

    const std::vector<double> wx = edge_window(nx);
    const std::vector<double> wy = edge_window(ny);
    load_magnitude(a, wx, wy, bufA.get());
    load_magnitude(b, wx, wy, bufB.get());

    fftw_plan fwdA = nullptr;
    fftw_plan fwdB = nullptr;
    fftw_plan bwd = nullptr;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fwdA = fftw_plan_dft_2d(ny, nx, bufA.get(), bufA.get(), FFTW_FORWARD, FFTW_ESTIMATE);
        fwdB = fftw_plan_dft_2d(ny, nx, bufB.get(), bufB.get(), FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_2d(ny, nx, surf.get(), surf.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(fwdA);
    fftw_execute(fwdB);

    // Normalized cross-power spectrum R = F_A conj(F_B) / max(|.|, eps),
    // restricted to the measurement band with a raised-cosine rolloff.  The
    // raster oversamples the physical bandlimit several times, so unmasked
    // whitening would hand most of the vote to bins that carry no signal.
    const double kBand = band_limit(a, b);
    const double kx0 = 2.0 * std::numbers::pi / (nx * a.raster.pitch);
    const double ky0 = 2.0 * std::numbers::pi / (ny * a.raster.pitch);
    for (int iy = 0; iy < ny; ++iy) {
        const int sy = iy <= ny / 2 ? iy : iy - ny;
        for (int ix = 0; ix < nx; ++ix) {
            const int sx = ix <= nx / 2 ? ix : ix - nx;
            const double kr = std::hypot(kx0 * sx, ky0 * sy);
            double mask = 1.0;
            if (std::isfinite(kBand)) {
                if (kr >= kBand) mask = 0.0;
                else if (kr > 0.8 * kBand)
                    mask = 0.5 * (1.0 + std::cos(std::numbers::pi * (kr - 0.8 * kBand) /
                                                 (0.2 * kBand)));
            }
            const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
            const cplx fa(bufA[i][0], bufA[i][1]);
            const cplx fb(bufB[i][0], bufB[i][1]);
            const cplx cp = fa * std::conj(fb);
            const cplx r = mask * cp / std::max(std::abs(cp), kCrossPowerFloor);
            surf[i][0] = r.real();
            surf[i][1] = r.imag();
        }
    }
    fftw_execute(bwd);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(fwdA);
        fftw_destroy_plan(fwdB);
        fftw_destroy_plan(bwd);
    }

    // Correlation surface: |IFFT(R)| / N.  A pure displacement gives a unit
    // delta, so peak/energy is a quality in [0, 1].
    std::vector<double> s(n);
    double energy = 0.0;
    double peak = -1.0;
    std::size_t peakIdx = 0;
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::hypot(surf[i][0], surf[i][1]) * scale;
        s[i] = v;
        energy += v * v;
        if (v > peak) {
            peak = v;
            peakIdx = i;
        }
    }

    const int px = static_cast<int>(peakIdx % static_cast<std::size_t>(nx));
    const int py = static_cast<int>(peakIdx / static_cast<std::size_t>(nx));
    auto at = [&](int ix, int iy) {
        ix = (ix % nx + nx) % nx;
        iy = (iy % ny + ny) % ny;
        return s[static_cast<std::size_t>(iy) * nx + ix];
    };
    const double fx = px + parabolic_offset(at(px - 1, py), at(px, py), at(px + 1, py));
    const double fy = py + parabolic_offset(at(px, py - 1), at(px, py), at(px, py + 1));

    // The surface peaks at −shift (modulo the raster); unwrap to the signed
    // range and negate so the result is the displacement of b relative to a.
    auto unwrap = [](double v, int dim) { return v > dim / 2.0 ? v - dim : v; };
    PixelShift out;
    out.dxPx = -unwrap(fx, nx);
    out.dyPx = -unwrap(fy, ny);
    out.quality = std::clamp(peak / std::max(energy, kParabolaFloor), 0.0, 1.0);
    return out;
}

ShiftSet estimate_trajectory(const std::vector<BpImage>& images, int refCycle) {
    const int cycles = static_cast<int>(images.size());
    if (cycles == 0) fail_validation("estimate_trajectory: no images");
    if (refCycle < 0 || refCycle >= cycles)
        fail_validation("estimate_trajectory: reference cycle " +
                                               std::to_string(refCycle + 1) + " out of range");

    ShiftSet out;
    out.refCycle = refCycle;
    out.shifts.resize(static_cast<std::size_t>(cycles));
    const double pitch = images[static_cast<std::size_t>(refCycle)].raster.pitch;
    for (int m = 0; m < cycles; ++m) {
        auto& sh = out.shifts[static_cast<std::size_t>(m)];
        if (m == refCycle) {
            sh = {0.0, 0.0, 1.0};
            continue;
        }
        const PixelShift ps =
            phase_correlate(images[static_cast<std::size_t>(refCycle)], images[static_cast<std::size_t>(m)]);
        sh.dx = ps.dxPx * pitch;
        sh.dy = ps.dyPx * pitch;
        sh.quality = ps.quality;
    }
    return out;
}

ArrayLayout compensate_positions(const ArrayLayout& arrays, const ShiftSet& shifts, int m) {
    if (m < 0 || m >= static_cast<int>(shifts.shifts.size()))
        fail_validation("compensate_positions: cycle out of range");
    const ShiftEstimate& sh = shifts.shifts[static_cast<std::size_t>(m)];
    ArrayLayout out = arrays;
    for (Vec2& t : out.tx) {
        t.x -= sh.dx;
        t.y -= sh.dy;
    }
    for (Vec2& r : out.rx) {
        r.x -= sh.dx;
        r.y -= sh.dy;
    }
    return out;
}

}  // namespace emiv
