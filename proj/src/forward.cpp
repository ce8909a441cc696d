#include "emiv/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "emiv/errors.hpp"
#include "emiv/hankel.hpp"
#include "emiv/inversion.hpp"

namespace emiv {

namespace {

constexpr double kPitchFloor = 0.004;   // [m]
constexpr double kPitchCeil = 0.02;     // [m]
constexpr double kCellsPerWavelength = 64.0;
constexpr double kAbsorberWavelengths = 0.25;
constexpr double kMarginWavelengths = 0.15;

int clamp_int(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

void require_free_space_background(const SceneConfig& s) {
    if (s.bgEpsR != 1.0 || s.bgSigma != 0.0)
        fail_validation("synthesis: only a free-space background is supported");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

double target_support_radius(const SceneConfig& s) {
    double r = 0.0;
    for (const Disc& d : s.discs) r = std::max(r, std::hypot(d.cx, d.cy) + d.radius);
    if (r <= 0.0) fail_validation("target_support_radius: target template is empty");
    return r;
}

SynthPlan plan_synth_grid(double freqHz, double supportRadius) {
    if (!(freqHz > 0.0)) fail_validation("plan_synth_grid: frequency must be positive");
    if (!(supportRadius > 0.0)) fail_validation("plan_synth_grid: empty support");
    const double lambda0 = c0 / freqHz;
    const double h = std::clamp(lambda0 / kCellsPerWavelength, kPitchFloor, kPitchCeil);
    SynthPlan plan;
    plan.freqHz = freqHz;
    plan.pml.cells = clamp_int(
        static_cast<int>(std::ceil(kAbsorberWavelengths * lambda0 / h)), 12, 48);
    const int margin = clamp_int(
        static_cast<int>(std::ceil(kMarginWavelengths * lambda0 / h)), 6, 40);
    const int half = static_cast<int>(std::ceil(supportRadius / h)) + margin + plan.pml.cells;
    plan.grid = Grid2D{2 * half + 1, 2 * half + 1, -half * h, -half * h, h};
    return plan;
}

MeasurementSet synth_measurements(const SceneConfig& scene) {
    require_valid_scene(scene);
    require_free_space_background(scene);
    const std::vector<double> freqs = scene.freqs.unionList();
    if (freqs.empty()) fail_validation("synth_measurements: no frequencies");

    MeasurementSet meas;
    meas.cycles = scene.trajectory.cycles();
    meas.txCount = static_cast<int>(scene.arrays.tx.size());
    meas.rxCount = static_cast<int>(scene.arrays.rx.size());
    meas.freqsHz = freqs;
    meas.snrDb = std::numeric_limits<double>::infinity();
    meas.seed = 0;
    meas.sceneHash = scene_hash(scene);
    meas.crimeMode = false;
    meas.data.assign(meas.count(), cplx(0.0, 0.0));

    const double supportRadius = target_support_radius(scene);

    for (int f = 0; f < meas.freqCount(); ++f) {
        const double omega = 2.0 * pi * freqs[static_cast<std::size_t>(f)];
        const double k0sq = (omega / c0) * (omega / c0);
        const SynthPlan plan = plan_synth_grid(freqs[static_cast<std::size_t>(f)], supportRadius);
        const Grid2D& g = plan.grid;

        // Target-frame contrast; identical for every cycle by construction.
        const ContrastMap contrast = rasterize_target(scene, g, 0.0, 0.0);
        std::vector<int> support;
        for (int n = 0; n < g.cells(); ++n)
            if (contrast.dEps[static_cast<std::size_t>(n)] != 0.0 ||
                contrast.sigma[static_cast<std::size_t>(n)] != 0.0)
                support.push_back(n);
        const int S = static_cast<int>(support.size());

        std::vector<cplx> epsRel(static_cast<std::size_t>(g.cells()));
        std::vector<cplx> chi(static_cast<std::size_t>(S));
        for (int n = 0; n < g.cells(); ++n)
            epsRel[static_cast<std::size_t>(n)] =
                cplx(1.0, 0.0) + contrast.chi(n, omega);
        for (int s = 0; s < S; ++s)
            chi[static_cast<std::size_t>(s)] = contrast.chi(support[static_cast<std::size_t>(s)], omega);

        StiffnessOperator op = assemble_stiffness(g, omega, epsRel, plan.pml);
        factorize(op);

        std::vector<cplx> rhs(static_cast<std::size_t>(g.cells()));
        std::vector<cplx> eIncSupport(static_cast<std::size_t>(S));
        std::vector<cplx> radiators(static_cast<std::size_t>(S));
        for (int m = 0; m < meas.cycles; ++m) {
            const double cx = scene.trajectory.x[static_cast<std::size_t>(m)];
            const double cy = scene.trajectory.y[static_cast<std::size_t>(m)];

            // Receiver radiation matrix for this cycle, shared across sources.
            Eigen::MatrixXcd K(meas.rxCount, S);
            for (int q = 0; q < meas.rxCount; ++q) {
                const Vec2 rq = scene.arrays.rx[static_cast<std::size_t>(q)];
                for (int s = 0; s < S; ++s) {
                    const int n = support[static_cast<std::size_t>(s)];
                    const double dx = (rq.x - cx) - g.x(n % g.nx);
                    const double dy = (rq.y - cy) - g.y(n / g.nx);
                    K(q, s) = sensing_kernel(omega, g.pitch, std::hypot(dx, dy));
                }
            }

            for (int p = 0; p < meas.txCount; ++p) {
                const Vec2 tp = scene.arrays.tx[static_cast<std::size_t>(p)];
                std::fill(rhs.begin(), rhs.end(), cplx(0.0, 0.0));
                for (int s = 0; s < S; ++s) {
                    const int n = support[static_cast<std::size_t>(s)];
                    const double dx = (tp.x - cx) - g.x(n % g.nx);
                    const double dy = (tp.y - cy) - g.y(n / g.nx);
                    eIncSupport[static_cast<std::size_t>(s)] =
                        line_source_cell(omega, g.pitch, std::hypot(dx, dy));
                    rhs[static_cast<std::size_t>(n)] =
                        -op.stretchDiag[static_cast<std::size_t>(n)] * k0sq *
                        chi[static_cast<std::size_t>(s)] * eIncSupport[static_cast<std::size_t>(s)];
                }
                const std::vector<cplx> eSc = solve(op, rhs);
                for (int s = 0; s < S; ++s) {
                    const int n = support[static_cast<std::size_t>(s)];
                    radiators[static_cast<std::size_t>(s)] =
                        chi[static_cast<std::size_t>(s)] *
                        (eIncSupport[static_cast<std::size_t>(s)] + eSc[static_cast<std::size_t>(n)]);
                }
                for (int q = 0; q < meas.rxCount; ++q) {
                    cplx acc(0.0, 0.0);
                    for (int s = 0; s < S; ++s)
                        acc += K(q, s) * radiators[static_cast<std::size_t>(s)];
                    meas.data[meas.index(m, f, p, q)] = acc;
                }
            }
        }
    }
    return meas;
}

MeasurementSet crime_measurements(const SceneConfig& scene) {
    require_valid_scene(scene);
    require_free_space_background(scene);
    const std::vector<double> freqs = scene.freqs.unionList();
    if (freqs.empty()) fail_validation("crime_measurements: no frequencies");

    const InversionOperators ops = build_inversion_operators(
        scene.arrays, true_shifts(scene), freqs, scene.inversionDomain);
    const int ref = scene.trajectory.refCycle;
    const ContrastMap contrast =
        rasterize_target(scene, scene.inversionDomain, scene.trajectory.x[static_cast<std::size_t>(ref)],
                         scene.trajectory.y[static_cast<std::size_t>(ref)]);
    const std::vector<Eigen::MatrixXcd> blocks = crime_synthesize(ops, contrast);

    MeasurementSet meas;
    meas.cycles = ops.cycles;
    meas.txCount = ops.txCount;
    meas.rxCount = ops.rxCount;
    meas.freqsHz = freqs;
    meas.snrDb = std::numeric_limits<double>::infinity();
    meas.seed = 0;
    meas.sceneHash = scene_hash(scene);
    meas.crimeMode = true;
    meas.data.assign(meas.count(), cplx(0.0, 0.0));
    for (int m = 0; m < meas.cycles; ++m)
        for (int f = 0; f < meas.freqCount(); ++f)
            for (int p = 0; p < meas.txCount; ++p)
                for (int q = 0; q < meas.rxCount; ++q)
                    meas.data[meas.index(m, f, p, q)] =
                        blocks[static_cast<std::size_t>(ops.block(m, f))](q, p);
    return meas;
}

MeasurementSet add_noise(const MeasurementSet& meas, double snrDb, std::uint64_t seed) {
    if (std::isnan(snrDb)) fail_validation("add_noise: snrDb must not be NaN");
    if (std::isinf(snrDb) && snrDb > 0.0) return meas;

    MeasurementSet out = meas;
    out.snrDb = snrDb;
    out.seed = seed;
    const double noiseFactor = std::pow(10.0, -snrDb / 10.0);

    for (int m = 0; m < meas.cycles; ++m) {
        for (int f = 0; f < meas.freqCount(); ++f) {
            for (int p = 0; p < meas.txCount; ++p) {
                // Mean receiver data power sets the noise level for this view.
                double power = 0.0;
                for (int q = 0; q < meas.rxCount; ++q)
                    power += std::norm(meas.data[meas.index(m, f, p, q)]);
                power /= meas.rxCount;
                const double sigmaN = std::sqrt(power * noiseFactor);

                const std::uint64_t tripleIndex =
                    (static_cast<std::uint64_t>(m) * meas.freqCount() + f) * meas.txCount + p;
                std::mt19937_64 rng(splitmix64(seed ^ splitmix64(tripleIndex + 1)));
                for (int q = 0; q < meas.rxCount; ++q) {
                    const double u1 =
                        1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;  // (0, 1]
                    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
                    const double amp = sigmaN * std::sqrt(-std::log(u1));
                    const double phase = 2.0 * pi * u2;
                    out.data[meas.index(m, f, p, q)] +=
                        cplx(amp * std::cos(phase), amp * std::sin(phase));
                }
            }
        }
    }
    return out;
}

}  // namespace emiv
