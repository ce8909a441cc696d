#include "emiv/bp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "emiv/errors.hpp"
#include "emiv/threading.hpp"

namespace emiv {

namespace {

// Index of `f` in the measurement frequency list (exact or 1e-9 relative).
int freq_index(const MeasurementSet& meas, double f) {
    for (size_t i = 0; i < meas.freqsHz.size(); ++i) {
        if (meas.freqsHz[i] == f || std::abs(meas.freqsHz[i] - f) <= 1e-9 * f)
            return static_cast<int>(i);
    }
    fail_validation("backproject: frequency " + std::to_string(f) +
                    " Hz is not present in the measurement set");
}

}  // namespace

Grid2D default_bp_raster() {
    Grid2D g;
    g.pitch = 0.0125;
    g.nx = 145;  // [-0.9, 0.9]
    g.ny = 97;   // [-0.6, 0.6]
    g.originX = -0.9;
    g.originY = -0.6;
    return g;
}

BpImage backproject(const MeasurementSet& meas, int cycle, const SceneConfig& scene,
                    const Grid2D& raster) {
    if (cycle < 0 || cycle >= meas.cycles) fail_validation("backproject: cycle out of range");
    check_grid(raster, "backproject");

    const auto& tx = scene.arrays.tx;
    const auto& rx = scene.arrays.rx;
    if (static_cast<int>(tx.size()) != meas.txCount ||
        static_cast<int>(rx.size()) != meas.rxCount)
        fail_validation("backproject: scene arrays do not match measurement dimensions");

    BpImage img;
    img.raster = raster;
    img.cycle = cycle;
    img.freqsHz = scene.freqs.bp;
    const int npix = raster.cells();
    img.values.assign(npix, cplx(0.0, 0.0));

    const int P = meas.txCount, Q = meas.rxCount;
    const double norm = 1.0 / (static_cast<double>(img.freqsHz.size()) * P * Q);

    // Round-trip phase factored per element: exp(+ik d_tx[p]) and
    // exp(+ik d_rx[q]) tables per pixel, then a per-pixel (p,q) contraction.
    // Pixels are partitioned across workers; every pixel's sum still runs in
    // the fixed (ω, p, q) order, so the image is thread-count invariant.
    std::vector<std::vector<cplx>> etx(tx.size()), erx(rx.size());
    for (size_t fi = 0; fi < img.freqsHz.size(); ++fi) {
        const double f = img.freqsHz[fi];
        const double k = 2.0 * pi * f / c0;
        const int mi = freq_index(meas, f);
        const cplx* data = &meas.data[meas.index(cycle, mi, 0, 0)];

        for (size_t p = 0; p < tx.size(); ++p) etx[p].resize(npix);
        for (size_t q = 0; q < rx.size(); ++q) erx[q].resize(npix);
        parallel_for(npix, [&](int pix) {
            const int ix = pix % raster.nx, iy = pix / raster.nx;
            const double x = raster.x(ix), y = raster.y(iy);
            for (size_t p = 0; p < tx.size(); ++p)
                etx[p][pix] = std::polar(1.0, k * std::hypot(tx[p].x - x, tx[p].y - y));
            for (size_t q = 0; q < rx.size(); ++q)
                erx[q][pix] = std::polar(1.0, k * std::hypot(rx[q].x - x, rx[q].y - y));
        });

        parallel_for(npix, [&](int pix) {
            cplx acc(0.0, 0.0);
            for (int p = 0; p < P; ++p) {
                cplx inner(0.0, 0.0);
                const cplx* row = data + static_cast<size_t>(p) * Q;
                for (int q = 0; q < Q; ++q) inner += row[q] * erx[q][pix];
                acc += etx[p][pix] * inner;
            }
            img.values[pix] += acc;
        });
    }

    for (cplx& v : img.values) v *= norm;
    return img;
}

std::vector<BpImage> bp_all_cycles(const MeasurementSet& meas, const SceneConfig& scene,
                                   const Grid2D& raster) {
    std::vector<BpImage> out;
    out.reserve(meas.cycles);
    for (int m = 0; m < meas.cycles; ++m) out.push_back(backproject(meas, m, scene, raster));
    return out;
}

std::array<double, 4> bp_blob_box(const BpImage& img, double dropDb, int dilatePixels) {
    double peak = 0.0;
    for (const cplx& v : img.values) peak = std::max(peak, std::abs(v));
    if (peak <= 0.0) fail_validation("bp_blob_box: image is identically zero");
    const double thresh = peak * std::pow(10.0, -dropDb / 20.0);

    const Grid2D& g = img.raster;
    int x0 = g.nx, x1 = -1, y0 = g.ny, y1 = -1;
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            if (std::abs(img.values[g.index(ix, iy)]) >= thresh) {
                x0 = std::min(x0, ix);
                x1 = std::max(x1, ix);
                y0 = std::min(y0, iy);
                y1 = std::max(y1, iy);
            }
    x0 = std::max(0, x0 - dilatePixels);
    y0 = std::max(0, y0 - dilatePixels);
    x1 = std::min(g.nx - 1, x1 + dilatePixels);
    y1 = std::min(g.ny - 1, y1 + dilatePixels);
    return {g.x(x0), g.y(y0), g.x(x1), g.y(y1)};
}

}  // namespace emiv
