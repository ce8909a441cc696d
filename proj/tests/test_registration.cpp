#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "emiv/bp.hpp"
#include "emiv/errors.hpp"
#include "emiv/registration.hpp"
#include "emiv/scene.hpp"

using namespace emiv;

namespace {

Grid2D snapshot_raster(int nx, int ny, double pitch) {
    Grid2D g;
    g.nx = nx;
    g.ny = ny;
    g.pitch = pitch;
    g.originX = -0.5 * (nx - 1) * pitch;
    g.originY = -0.5 * (ny - 1) * pitch;
    return g;
}

// Smooth asymmetric two-bump target centered at (cx, cy) in pixels; sampled
// from the continuum so fractional centers are exact, not interpolated.
BpImage blob_image(const Grid2D& g, double cxPx, double cyPx, double amp = 1.0) {
    BpImage img;
    img.raster = g;
    img.values.resize(static_cast<std::size_t>(g.cells()));
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double dx = ix - cxPx, dy = iy - cyPx;
            const double main = std::exp(-(dx * dx + dy * dy) / (2.0 * 2.5 * 2.5));
            const double side = 0.6 * std::exp(-((dx - 6.0) * (dx - 6.0) + (dy - 2.0) * (dy - 2.0)) /
                                               (2.0 * 2.0 * 2.0));
            img.values[static_cast<std::size_t>(g.index(ix, iy))] = amp * (main + side);
        }
    }
    return img;
}

}  // namespace

TEST_CASE("registration: identical images register at exactly zero") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const BpImage a = blob_image(g, 30.0, 22.0);
    const PixelShift s = phase_correlate(a, a);
    CHECK(std::abs(s.dxPx) < 1e-9);
    CHECK(std::abs(s.dyPx) < 1e-9);
    CHECK(s.quality == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("registration: integer circular shifts are recovered to machine precision") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const BpImage a = blob_image(g, 28.0, 24.0);
    BpImage b;
    b.raster = g;
    b.values.resize(a.values.size());
    // B(x) = A(x - s) with s = (5, -3) pixels, wrapped
    const int sx = 5, sy = -3;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const int jx = ((ix - sx) % g.nx + g.nx) % g.nx;
            const int jy = ((iy - sy) % g.ny + g.ny) % g.ny;
            b.values[static_cast<std::size_t>(g.index(ix, iy))] =
                a.values[static_cast<std::size_t>(g.index(jx, jy))];
        }
    }
    const PixelShift s = phase_correlate(a, b);
    CHECK(s.dxPx == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(s.dyPx == doctest::Approx(-3.0).epsilon(1e-6));
    CHECK(s.quality > 0.3);
}

TEST_CASE("registration: fractional shifts resolve to better than a tenth of a pixel") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const BpImage a = blob_image(g, 28.0, 24.0);
    const BpImage b = blob_image(g, 30.5, 22.75);  // shift (2.5, -1.25) px
    const PixelShift s = phase_correlate(a, b);
    CHECK(s.dxPx == doctest::Approx(2.5).epsilon(0.04));
    CHECK(std::abs(s.dyPx - (-1.25)) < 0.1);
    CHECK(s.quality > 0.2);
}

TEST_CASE("registration: swapping the image pair flips the sign of the shift") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const BpImage a = blob_image(g, 27.0, 25.0);
    const BpImage b = blob_image(g, 31.25, 21.5);
    const PixelShift ab = phase_correlate(a, b);
    const PixelShift ba = phase_correlate(b, a);
    CHECK(std::abs(ab.dxPx + ba.dxPx) < 0.1);
    CHECK(std::abs(ab.dyPx + ba.dyPx) < 0.1);
}

TEST_CASE("registration: the estimate is invariant to global amplitude scaling") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const BpImage a = blob_image(g, 28.0, 24.0);
    const BpImage b = blob_image(g, 31.0, 22.0);
    const BpImage bBig = blob_image(g, 31.0, 22.0, 37.0);
    const PixelShift s1 = phase_correlate(a, b);
    const PixelShift s2 = phase_correlate(a, bBig);
    // whitening cancels scale except in bins at the absolute cross-power floor
    CHECK(s1.dxPx == doctest::Approx(s2.dxPx).epsilon(1e-6));
    CHECK(s1.dyPx == doctest::Approx(s2.dyPx).epsilon(1e-6));
    CHECK(s1.quality == doctest::Approx(s2.quality).epsilon(1e-6));
}

TEST_CASE("registration: the spectral guard keeps band-limited blobs registering") {
    // same pair, but declared as snapshots of a 0.1-1 GHz acquisition: the
    // cross-power is then masked beyond the achievable spatial band
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    BpImage a = blob_image(g, 28.0, 24.0);
    BpImage b = blob_image(g, 30.5, 22.75);
    for (int i = 0; i < 19; ++i) {
        a.freqsHz.push_back(1.0e6 * (100 + 50 * i));
        b.freqsHz.push_back(1.0e6 * (100 + 50 * i));
    }
    const PixelShift s = phase_correlate(a, b);
    CHECK(std::abs(s.dxPx - 2.5) < 0.1);
    CHECK(std::abs(s.dyPx - (-1.25)) < 0.1);
    CHECK(s.quality > 0.2);
}

TEST_CASE("registration: trajectory estimation returns metric shifts against the reference") {
    const Grid2D g = snapshot_raster(96, 64, 0.0125);
    // blob centers on fractional pixels along a diagonal path
    const std::vector<double> xm = {-0.15, -0.05, 0.05, 0.15};
    const std::vector<double> ym = {0.075, 0.025, -0.025, -0.075};
    const int ref = 2;
    std::vector<BpImage> images;
    for (std::size_t m = 0; m < xm.size(); ++m) {
        const double cx = (xm[m] - g.originX) / g.pitch;
        const double cy = (ym[m] - g.originY) / g.pitch;
        BpImage img = blob_image(g, cx, cy);
        img.cycle = static_cast<int>(m);
        images.push_back(img);
    }

    const ShiftSet ss = estimate_trajectory(images, ref);
    CHECK(ss.refCycle == ref);
    REQUIRE(ss.shifts.size() == images.size());
    CHECK(ss.shifts[ref].dx == 0.0);  // reference is exactly zero by contract
    CHECK(ss.shifts[ref].dy == 0.0);
    CHECK(ss.shifts[ref].quality == 1.0);
    for (std::size_t m = 0; m < xm.size(); ++m) {
        CHECK(std::abs(ss.shifts[m].dx - (xm[m] - xm[ref])) < 0.1 * g.pitch);
        CHECK(std::abs(ss.shifts[m].dy - (ym[m] - ym[ref])) < 0.1 * g.pitch);
        CHECK(ss.shifts[m].quality > 0.2);
    }
}

TEST_CASE("registration: a single-cycle acquisition yields one zero shift") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    const std::vector<BpImage> images = {blob_image(g, 30.0, 20.0)};
    const ShiftSet ss = estimate_trajectory(images, 0);
    REQUIRE(ss.shifts.size() == 1);
    CHECK(ss.shifts[0].dx == 0.0);
    CHECK(ss.shifts[0].dy == 0.0);
    CHECK(ss.shifts[0].quality == 1.0);
}

TEST_CASE("registration: compensation translates every element opposite the shift") {
    ArrayLayout arrays;
    arrays.tx = {{2.45, 0.0}, {0.0, 2.45}};
    arrays.rx = {{-2.45, 0.0}, {0.0, -2.45}, {1.7, 1.7}};
    ShiftSet ss;
    ss.refCycle = 1;
    ss.shifts = {{0.2, -0.1, 0.9}, {0.0, 0.0, 1.0}, {-0.4, 0.3, 0.8}};

    const ArrayLayout at0 = compensate_positions(arrays, ss, 0);
    for (std::size_t i = 0; i < arrays.tx.size(); ++i) {
        CHECK(at0.tx[i].x == doctest::Approx(arrays.tx[i].x - 0.2));
        CHECK(at0.tx[i].y == doctest::Approx(arrays.tx[i].y + 0.1));
    }
    for (std::size_t i = 0; i < arrays.rx.size(); ++i) {
        CHECK(at0.rx[i].x == doctest::Approx(arrays.rx[i].x - 0.2));
        CHECK(at0.rx[i].y == doctest::Approx(arrays.rx[i].y + 0.1));
    }

    // the reference cycle maps to itself
    const ArrayLayout at1 = compensate_positions(arrays, ss, 1);
    for (std::size_t i = 0; i < arrays.tx.size(); ++i) {
        CHECK(at1.tx[i].x == arrays.tx[i].x);
        CHECK(at1.tx[i].y == arrays.tx[i].y);
    }
}

TEST_CASE("registration: degenerate and mismatched inputs fail validation") {
    const Grid2D g = snapshot_raster(64, 48, 0.0125);
    BpImage zero;
    zero.raster = g;
    zero.values.assign(static_cast<std::size_t>(g.cells()), cplx(0.0, 0.0));
    const BpImage a = blob_image(g, 30.0, 20.0);
    CHECK_THROWS_AS(phase_correlate(a, zero), Error);

    BpImage other = blob_image(snapshot_raster(32, 32, 0.0125), 16.0, 16.0);
    CHECK_THROWS_AS(phase_correlate(a, other), Error);

    const std::vector<BpImage> images = {a, blob_image(g, 31.0, 21.0)};
    CHECK_THROWS_AS(estimate_trajectory(images, 5), Error);
    CHECK_THROWS_AS(estimate_trajectory({}, 0), Error);
}
