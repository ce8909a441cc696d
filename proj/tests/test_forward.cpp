#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "emiv/constants.hpp"
#include "emiv/errors.hpp"
#include "emiv/forward.hpp"
#include "oracles.hpp"

using namespace emiv;

namespace {

// Single-disc variant of the benchmark scene with a small ring array, so a
// synthesis run stays fast while keeping the official grid bookkeeping.
SceneConfig mini_cylinder_scene(double freqHz, int txCount, int rxCount) {
    SceneConfig s = make_tridisc_scene();
    s.name = "mini-cylinder";
    s.discs = {{0.0, 0.0, 0.06, 2.0, 0.0}};
    s.trajectory.x = {0.0};
    s.trajectory.y = {0.0};
    s.trajectory.refCycle = 0;
    s.arrays.tx.clear();
    s.arrays.rx.clear();
    for (int p = 0; p < txCount; ++p) {
        const double a = 2.0 * pi * p / txCount;
        s.arrays.tx.push_back({2.45 * std::cos(a), 2.45 * std::sin(a)});
    }
    for (int q = 0; q < rxCount; ++q) {
        const double a = 2.0 * pi * (q + 0.5) / rxCount;
        s.arrays.rx.push_back({2.45 * std::cos(a), 2.45 * std::sin(a)});
    }
    s.freqs.bp = {freqHz};
    s.freqs.inversion = {freqHz};
    return s;
}

double rel_l2(const std::vector<cplx>& got, const std::vector<cplx>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += std::norm(got[i] - want[i]);
        den += std::norm(want[i]);
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("forward: homogeneous cylinder data matches the series solution within 2%") {
    const double freq = 5.0e8;
    const SceneConfig s = mini_cylinder_scene(freq, 3, 8);
    const MeasurementSet ms = synth_measurements(s);

    REQUIRE(ms.cycles == 1);
    REQUIRE(ms.freqsHz == std::vector<double>{freq});
    REQUIRE(ms.txCount == 3);
    REQUIRE(ms.rxCount == 8);
    CHECK(std::isinf(ms.snrDb));
    CHECK(ms.sceneHash == scene_hash(s));
    CHECK(!ms.crimeMode);

    oracle::CylinderScene cyl;
    cyl.epsR = 3.0;
    cyl.radius = 0.06;
    cyl.freqHz = freq;

    std::vector<cplx> got, want;
    for (int p = 0; p < ms.txCount; ++p) {
        for (int q = 0; q < ms.rxCount; ++q) {
            got.push_back(ms.data[ms.index(0, 0, p, q)]);
            want.push_back(oracle::cylinder_scattered(cyl, s.arrays.tx[p].x, s.arrays.tx[p].y,
                                                      s.arrays.rx[q].x, s.arrays.rx[q].y));
        }
    }
    CHECK(rel_l2(got, want) < 0.02);
    // every individual receiver sample is close too, not just the aggregate
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 0.05 * std::abs(want[i]) + 1e-12);
}

TEST_CASE("forward: near-zero contrast produces near-zero scattered data") {
    SceneConfig s = mini_cylinder_scene(5.0e8, 1, 4);
    s.discs[0].dEps = 1e-8;
    const MeasurementSet tiny = synth_measurements(s);
    s.discs[0].dEps = 2.0;
    const MeasurementSet full = synth_measurements(s);

    double maxTiny = 0.0, maxFull = 0.0;
    for (const cplx& z : tiny.data) maxTiny = std::max(maxTiny, std::abs(z));
    for (const cplx& z : full.data) maxFull = std::max(maxFull, std::abs(z));
    // scattering scales linearly in the weak-contrast limit: 8 orders down
    CHECK(maxTiny < 1e-7 * maxFull);
}

TEST_CASE("forward: each cycle is an independent target-frame problem") {
    // a cycle repeated at the same center must give identical samples, and a
    // 2-cycle trajectory must equal the two single-cycle syntheses
    SceneConfig s2 = mini_cylinder_scene(4.0e8, 2, 5);
    s2.discs[0].dEps = 1.5;
    s2.trajectory.x = {-0.3, 0.25};
    s2.trajectory.y = {0.1, -0.15};
    s2.trajectory.refCycle = 0;
    const MeasurementSet both = synth_measurements(s2);
    REQUIRE(both.cycles == 2);

    for (int m = 0; m < 2; ++m) {
        SceneConfig s1 = s2;
        s1.trajectory.x = {s2.trajectory.x[m]};
        s1.trajectory.y = {s2.trajectory.y[m]};
        s1.trajectory.refCycle = 0;
        const MeasurementSet one = synth_measurements(s1);
        for (int p = 0; p < both.txCount; ++p)
            for (int q = 0; q < both.rxCount; ++q)
                CHECK(both.data[both.index(m, 0, p, q)] == one.data[one.index(0, 0, p, q)]);
    }
}

TEST_CASE("forward: swapping transmitter and receiver gives the same sample") {
    // reciprocity of the discrete model: source kernel and receiver kernel
    // share the same regularized propagator and the operator is symmetric
    SceneConfig a = mini_cylinder_scene(6.0e8, 1, 1);
    a.discs[0] = {0.01, -0.02, 0.07, 1.7, 0.003};
    a.arrays.tx = {{2.45, 0.0}};
    a.arrays.rx = {{-1.6, 1.4}};
    SceneConfig b = a;
    std::swap(b.arrays.tx[0], b.arrays.rx[0]);

    const cplx dab = synth_measurements(a).data[0];
    const cplx dba = synth_measurements(b).data[0];
    CHECK(std::abs(dab - dba) < 1e-8 * std::abs(dab));
}

TEST_CASE("forward: noise injection hits the requested data-referenced snr") {
    MeasurementSet ms;
    ms.cycles = 2;
    ms.txCount = 3;
    ms.rxCount = 1500;  // wide averaging so the empirical snr is tight
    ms.freqsHz = {3.0e8, 7.0e8};
    ms.snrDb = std::numeric_limits<double>::infinity();
    ms.data.resize(ms.count());
    for (std::size_t i = 0; i < ms.data.size(); ++i) {
        const double mag = 1.0 + 0.5 * std::sin(0.01 * static_cast<double>(i));
        ms.data[i] = std::polar(mag, 0.37 * static_cast<double>(i % 97));
    }

    const double snrDb = 20.0;
    const MeasurementSet noisy = add_noise(ms, snrDb, 1234);
    CHECK(noisy.snrDb == snrDb);
    CHECK(noisy.seed == 1234);

    // per-view empirical snr: mean data power over mean perturbation power
    for (int m = 0; m < ms.cycles; ++m) {
        for (int f = 0; f < ms.freqCount(); ++f) {
            for (int p = 0; p < ms.txCount; ++p) {
                double sig = 0.0, err = 0.0;
                for (int q = 0; q < ms.rxCount; ++q) {
                    const std::size_t i = ms.index(m, f, p, q);
                    sig += std::norm(ms.data[i]);
                    err += std::norm(noisy.data[i] - ms.data[i]);
                }
                const double empirical = 10.0 * std::log10(sig / err);
                CHECK(empirical == doctest::Approx(snrDb).epsilon(0.01));
            }
        }
    }
}

TEST_CASE("forward: noise perturbation is zero-mean and circular") {
    MeasurementSet ms;
    ms.cycles = 1;
    ms.txCount = 1;
    ms.rxCount = 20000;
    ms.freqsHz = {5.0e8};
    ms.data.assign(ms.count(), cplx(2.0, -1.0));
    const MeasurementSet noisy = add_noise(ms, 10.0, 99);

    cplx mean = 0.0;
    double re2 = 0.0, im2 = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < ms.data.size(); ++i) {
        const cplx n = noisy.data[i] - ms.data[i];
        mean += n;
        re2 += n.real() * n.real();
        im2 += n.imag() * n.imag();
        cross += n.real() * n.imag();
    }
    const double n = static_cast<double>(ms.data.size());
    const double sigma2 = (re2 + im2) / n;  // total noise power per sample
    CHECK(std::abs(mean) / n < 0.03 * std::sqrt(sigma2));
    CHECK(re2 / im2 == doctest::Approx(1.0).epsilon(0.05));            // equal quadratures
    CHECK(std::abs(cross) / std::sqrt(re2 * im2) < 0.03);              // uncorrelated
}

TEST_CASE("forward: noise is seed-deterministic and snr=+inf is an exact passthrough") {
    MeasurementSet ms;
    ms.cycles = 1;
    ms.txCount = 2;
    ms.rxCount = 16;
    ms.freqsHz = {4.0e8};
    ms.snrDb = std::numeric_limits<double>::infinity();
    ms.data.resize(ms.count());
    for (std::size_t i = 0; i < ms.data.size(); ++i)
        ms.data[i] = cplx(std::cos(1.0 + static_cast<double>(i)), std::sin(static_cast<double>(i)));

    const MeasurementSet n1 = add_noise(ms, 10.0, 42);
    const MeasurementSet n2 = add_noise(ms, 10.0, 42);
    const MeasurementSet n3 = add_noise(ms, 10.0, 43);
    CHECK(n1.data == n2.data);
    CHECK(n1.data != n3.data);
    CHECK(n1.data != ms.data);

    const MeasurementSet clean = add_noise(ms, std::numeric_limits<double>::infinity(), 42);
    CHECK(clean.data == ms.data);
    CHECK(std::isinf(clean.snrDb));

    CHECK_THROWS_AS(add_noise(ms, std::numeric_limits<double>::quiet_NaN(), 1), Error);
}

TEST_CASE("forward: synthesis grid plans scale with frequency and cover the support") {
    const double support = 0.18;
    const SynthPlan lo = plan_synth_grid(1.0e8, support);
    const SynthPlan hi = plan_synth_grid(1.0e9, support);

    for (const SynthPlan& p : {lo, hi}) {
        CHECK(p.grid.nx % 2 == 1);  // odd: a node sits exactly at the target origin
        CHECK(p.grid.ny % 2 == 1);
        CHECK(p.grid.pitch >= 0.004);
        CHECK(p.grid.pitch <= 0.02);
        // interior (absorber excluded) must cover the disc support
        const double clear = 0.5 * p.grid.extentX() - p.pml.cells * p.grid.pitch;
        CHECK(clear >= support);
    }
    // resolution follows wavelength between the clamps
    CHECK(lo.grid.pitch > hi.grid.pitch);
    CHECK(hi.grid.pitch == doctest::Approx((c0 / 1.0e9) / 64.0).epsilon(1e-9));
    // absorber thickness tracks the wavelength (about a quarter wave)
    CHECK(lo.pml.cells * lo.grid.pitch > hi.pml.cells * hi.grid.pitch);
}

TEST_CASE("forward: crime data carries the crime flag and matches physics loosely") {
    SceneConfig s = mini_cylinder_scene(5.0e8, 2, 6);
    const MeasurementSet phys = synth_measurements(s);
    const MeasurementSet crime = crime_measurements(s);
    CHECK(crime.crimeMode);
    CHECK(!phys.crimeMode);
    CHECK(crime.sceneHash == phys.sceneHash);
    REQUIRE(crime.data.size() == phys.data.size());
    // different discretizations of the same physics: close but not identical
    CHECK(rel_l2(crime.data, phys.data) < 0.1);
    CHECK(crime.data != phys.data);
}
