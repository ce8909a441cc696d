#include "emiv/inversion.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <utility>

#include "emiv/constants.hpp"
#include "emiv/fdfd.hpp"
#include "emiv/hankel.hpp"
#include "emiv/registration.hpp"
#include "emiv/threading.hpp"
#include "fftw_lock.hpp"

namespace emiv {

namespace {

// Background solve used for the convolution kernel: the extraction stencil
// must stay this many cells clear of the absorbing frame.
constexpr int kGreenMargin = 24;
constexpr int kGreenPmlCells = 24;
constexpr double kEtaFloor = 1e-30;
constexpr int kFixedPointMaxIters = 20000;

int next_pow2(int v) {
    int p = 1;
    while (p < v) p *= 2;
    return p;
}

/// Re⟨a, b⟩ with the conjugate on the first argument, fixed traversal order.
double re_inner(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return a.conjugate().cwiseProduct(b).sum().real();
}

/// Columns of m scaled elementwise by v (N-vector against N×P matrix).
Eigen::MatrixXcd col_scale(const Eigen::MatrixXcd& m, const Eigen::VectorXcd& v) {
    return (m.array().colwise() * v.array()).matrix();
}

void require_block_shapes(const InversionOperators& ops,
                          const std::vector<Eigen::MatrixXcd>& data, const char* what) {
    if (static_cast<int>(data.size()) != ops.blockCount())
        fail_validation(std::string(what) + ": data block count does not match operators");
    for (const Eigen::MatrixXcd& blk : data)
        if (blk.rows() != ops.rxCount || blk.cols() != ops.txCount)
            fail_validation(std::string(what) + ": data block shape is not Q x P");
}

}  // namespace

// ---------------------------------------------------------------------------
// DomainGreenOperator

struct DomainGreenOperator::Impl {
    Grid2D dom;
    double omega = 0.0;
    int padX = 0;
    int padY = 0;
    std::vector<cplx> tbl;        // nx*ny kernel samples at absolute offsets
    std::vector<cplx> kernelHat;  // padded spectrum, 1/(padX*padY) included
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

DomainGreenOperator::DomainGreenOperator(const Grid2D& domain, double omega)
    : impl_(std::make_unique<Impl>()) {
    check_grid(domain, "DomainGreenOperator");
    if (!(omega > 0.0)) fail_validation("DomainGreenOperator: omega must be positive");
    impl_->dom = domain;
    impl_->omega = omega;
    const int nx = domain.nx;
    const int ny = domain.ny;
    const double h = domain.pitch;

    // One centered background solve covers every cell-to-cell offset.  The
    // response to a unit node source, scaled by -k0^2, is the discrete
    // counterpart of the radiation kernel used by the sensing matrices.
    const int halfX = (nx - 1) + kGreenMargin + kGreenPmlCells;
    const int halfY = (ny - 1) + kGreenMargin + kGreenPmlCells;
    Grid2D big{2 * halfX + 1, 2 * halfY + 1, -halfX * h, -halfY * h, h};
    PmlSpec pml;
    pml.cells = kGreenPmlCells;
    StiffnessOperator op = assemble_stiffness(big, omega, {}, pml);
    factorize(op);
    std::vector<cplx> rhs(static_cast<std::size_t>(big.cells()), cplx(0.0, 0.0));
    rhs[static_cast<std::size_t>(big.index(halfX, halfY))] = cplx(1.0, 0.0);
    const std::vector<cplx> u = solve(op, rhs);

    const double k0 = omega / c0;
    const double k0sq = k0 * k0;
    impl_->tbl.resize(static_cast<std::size_t>(nx) * ny);
    for (int ay = 0; ay < ny; ++ay) {
        for (int ax = 0; ax < nx; ++ax) {
            // The background response is mirror-symmetric; averaging the four
            // images enforces the symmetry exactly, which in turn makes the
            // operator exactly complex symmetric.
            const cplx s = u[static_cast<std::size_t>(big.index(halfX + ax, halfY + ay))] +
                           u[static_cast<std::size_t>(big.index(halfX - ax, halfY + ay))] +
                           u[static_cast<std::size_t>(big.index(halfX + ax, halfY - ay))] +
                           u[static_cast<std::size_t>(big.index(halfX - ax, halfY - ay))];
            impl_->tbl[static_cast<std::size_t>(ay) * nx + ax] = -k0sq * 0.25 * s;
        }
    }

    // Block-Toeplitz convolution via zero-padded FFTs.
    impl_->padX = next_pow2(2 * nx - 1);
    impl_->padY = next_pow2(2 * ny - 1);
    const std::size_t padN = static_cast<std::size_t>(impl_->padX) * impl_->padY;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * padN));
    if (buf == nullptr) fail_numerical("DomainGreenOperator: fftw_malloc failed");
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        impl_->fwd = fftw_plan_dft_2d(impl_->padY, impl_->padX, buf, buf, FFTW_FORWARD,
                                      FFTW_ESTIMATE);
        impl_->bwd = fftw_plan_dft_2d(impl_->padY, impl_->padX, buf, buf, FFTW_BACKWARD,
                                      FFTW_ESTIMATE);
    }
    std::memset(buf, 0, sizeof(fftw_complex) * padN);
    for (int dy = -(ny - 1); dy <= ny - 1; ++dy) {
        for (int dx = -(nx - 1); dx <= nx - 1; ++dx) {
            const int wx = (dx + impl_->padX) % impl_->padX;
            const int wy = (dy + impl_->padY) % impl_->padY;
            const cplx v = impl_->tbl[static_cast<std::size_t>(std::abs(dy)) * nx + std::abs(dx)];
            buf[static_cast<std::size_t>(wy) * impl_->padX + wx][0] = v.real();
            buf[static_cast<std::size_t>(wy) * impl_->padX + wx][1] = v.imag();
        }
    }
    fftw_execute_dft(impl_->fwd, buf, buf);
    impl_->kernelHat.resize(padN);
    const double scale = 1.0 / static_cast<double>(padN);
    for (std::size_t i = 0; i < padN; ++i)
        impl_->kernelHat[i] = cplx(buf[i][0], buf[i][1]) * scale;
    fftw_free(buf);
}

DomainGreenOperator::~DomainGreenOperator() {
    if (impl_ && (impl_->fwd != nullptr || impl_->bwd != nullptr)) {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        if (impl_->fwd != nullptr) fftw_destroy_plan(impl_->fwd);
        if (impl_->bwd != nullptr) fftw_destroy_plan(impl_->bwd);
    }
}

DomainGreenOperator::DomainGreenOperator(DomainGreenOperator&&) noexcept = default;
DomainGreenOperator& DomainGreenOperator::operator=(DomainGreenOperator&&) noexcept = default;

Eigen::MatrixXcd DomainGreenOperator::apply(const Eigen::MatrixXcd& x) const {
    const Impl& im = *impl_;
    const int nx = im.dom.nx;
    const int ny = im.dom.ny;
    if (x.rows() != im.dom.cells())
        fail_validation("DomainGreenOperator::apply: vector length does not match raster");
    const std::size_t padN = static_cast<std::size_t>(im.padX) * im.padY;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * padN));
    if (buf == nullptr) fail_numerical("DomainGreenOperator::apply: fftw_malloc failed");
    auto* cbuf = reinterpret_cast<cplx*>(buf);

    Eigen::MatrixXcd out(x.rows(), x.cols());
    for (Eigen::Index p = 0; p < x.cols(); ++p) {
        std::memset(buf, 0, sizeof(fftw_complex) * padN);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                cbuf[static_cast<std::size_t>(iy) * im.padX + ix] = x(im.dom.index(ix, iy), p);
        fftw_execute_dft(im.fwd, buf, buf);
        for (std::size_t i = 0; i < padN; ++i) cbuf[i] *= im.kernelHat[i];
        fftw_execute_dft(im.bwd, buf, buf);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                out(im.dom.index(ix, iy), p) = cbuf[static_cast<std::size_t>(iy) * im.padX + ix];
    }
    fftw_free(buf);
    return out;
}

Eigen::MatrixXcd DomainGreenOperator::apply_adjoint(const Eigen::MatrixXcd& x) const {
    return apply(x.conjugate()).conjugate();
}

cplx DomainGreenOperator::kernel_entry(int dx, int dy) const {
    const Impl& im = *impl_;
    const int ax = std::abs(dx);
    const int ay = std::abs(dy);
    if (ax >= im.dom.nx || ay >= im.dom.ny)
        fail_validation("DomainGreenOperator::kernel_entry: offset outside raster");
    return im.tbl[static_cast<std::size_t>(ay) * im.dom.nx + ax];
}

const Grid2D& DomainGreenOperator::domain() const { return impl_->dom; }
double DomainGreenOperator::omega() const { return impl_->omega; }

// ---------------------------------------------------------------------------
// Operators

Eigen::MatrixXcd sensing_matrix(const std::vector<Vec2>& rx, const Grid2D& domain, double omega,
                                int* regularizedEntries) {
    check_grid(domain, "sensing_matrix");
    if (rx.empty()) fail_validation("sensing_matrix: no receivers");
    const int q = static_cast<int>(rx.size());
    const int n = domain.cells();
    int reg = 0;
    Eigen::MatrixXcd phi(q, n);
    for (int iq = 0; iq < q; ++iq) {
        for (int iy = 0; iy < domain.ny; ++iy) {
            for (int ix = 0; ix < domain.nx; ++ix) {
                const double dx = rx[static_cast<std::size_t>(iq)].x - domain.x(ix);
                const double dy = rx[static_cast<std::size_t>(iq)].y - domain.y(iy);
                const double r = std::hypot(dx, dy);
                if (r < domain.pitch) ++reg;
                phi(iq, domain.index(ix, iy)) = sensing_kernel(omega, domain.pitch, r);
            }
        }
    }
    if (regularizedEntries != nullptr) *regularizedEntries = reg;
    return phi;
}

InversionOperators build_inversion_operators(
    const ArrayLayout& arrays, const ShiftSet& shifts, const std::vector<double>& freqsHz,
    const Grid2D& domain, std::vector<std::shared_ptr<const DomainGreenOperator>> sharedGreen) {
    check_grid(domain, "build_inversion_operators");
    if (arrays.tx.empty() || arrays.rx.empty())
        fail_validation("build_inversion_operators: empty transceiver arrays");
    if (freqsHz.empty()) fail_validation("build_inversion_operators: no frequencies");
    if (!std::is_sorted(freqsHz.begin(), freqsHz.end()))
        fail_validation("build_inversion_operators: frequencies must be ascending");
    if (shifts.shifts.empty()) fail_validation("build_inversion_operators: no cycles");
    if (shifts.refCycle < 0 || shifts.refCycle >= static_cast<int>(shifts.shifts.size()))
        fail_validation("build_inversion_operators: reference cycle out of range");

    InversionOperators ops;
    ops.domain = domain;
    ops.freqsHz = freqsHz;
    ops.cycles = static_cast<int>(shifts.shifts.size());
    ops.txCount = static_cast<int>(arrays.tx.size());
    ops.rxCount = static_cast<int>(arrays.rx.size());
    ops.refCycle = shifts.refCycle;
    const int F = ops.freqCount();
    const int N = domain.cells();

    if (static_cast<int>(sharedGreen.size()) == F) {
        for (int f = 0; f < F; ++f) {
            const auto& g = sharedGreen[static_cast<std::size_t>(f)];
            if (!g || !g->domain().sameRasterAs(domain) ||
                g->omega() != 2.0 * pi * freqsHz[static_cast<std::size_t>(f)])
                fail_validation("build_inversion_operators: shared Green operator mismatch");
        }
        ops.green = std::move(sharedGreen);
    } else if (sharedGreen.empty()) {
        ops.green.reserve(static_cast<std::size_t>(F));
        for (int f = 0; f < F; ++f)
            ops.green.push_back(std::make_shared<const DomainGreenOperator>(
                domain, 2.0 * pi * freqsHz[static_cast<std::size_t>(f)]));
    } else {
        fail_validation("build_inversion_operators: shared Green operator count mismatch");
    }

    ops.phi.resize(static_cast<std::size_t>(ops.blockCount()));
    ops.eInc.resize(static_cast<std::size_t>(ops.blockCount()));
    int regularizedTotal = 0;
    for (int m = 0; m < ops.cycles; ++m) {
        const ArrayLayout rel = compensate_positions(arrays, shifts, m);
        for (int f = 0; f < F; ++f) {
            const double omega = 2.0 * pi * freqsHz[static_cast<std::size_t>(f)];
            int reg = 0;
            ops.phi[static_cast<std::size_t>(ops.block(m, f))] =
                sensing_matrix(rel.rx, domain, omega, &reg);
            regularizedTotal += reg;

            Eigen::MatrixXcd einc(N, ops.txCount);
            for (int p = 0; p < ops.txCount; ++p) {
                const Vec2 t = rel.tx[static_cast<std::size_t>(p)];
                for (int iy = 0; iy < domain.ny; ++iy)
                    for (int ix = 0; ix < domain.nx; ++ix)
                        einc(domain.index(ix, iy), p) = line_source_cell(
                            omega, domain.pitch,
                            std::hypot(t.x - domain.x(ix), t.y - domain.y(iy)));
            }
            ops.eInc[static_cast<std::size_t>(ops.block(m, f))] = std::move(einc);
        }
    }
    if (regularizedTotal > 0)
        warn("build_inversion_operators: " + std::to_string(regularizedTotal) +
             " sensing entries within one cell of a receiver use the regularized kernel");
    return ops;
}

std::vector<Eigen::MatrixXcd> select_data(const MeasurementSet& meas,
                                          const std::vector<double>& freqsHz) {
    if (meas.cycles < 1 || meas.txCount < 1 || meas.rxCount < 1)
        fail_validation("select_data: empty measurement set");
    if (meas.data.size() != meas.count()) fail_validation("select_data: payload size mismatch");
    std::vector<int> fIdx;
    fIdx.reserve(freqsHz.size());
    for (double want : freqsHz) {
        int found = -1;
        for (int i = 0; i < meas.freqCount(); ++i) {
            if (std::abs(meas.freqsHz[static_cast<std::size_t>(i)] - want) <= 1e-9 * want) {
                found = i;
                break;
            }
        }
        if (found < 0)
            fail_validation("select_data: frequency " + std::to_string(want) +
                            " Hz not present in the measurement set");
        fIdx.push_back(found);
    }
    std::vector<Eigen::MatrixXcd> blocks(static_cast<std::size_t>(meas.cycles) * freqsHz.size());
    for (int m = 0; m < meas.cycles; ++m) {
        for (std::size_t f = 0; f < freqsHz.size(); ++f) {
            Eigen::MatrixXcd blk(meas.rxCount, meas.txCount);
            for (int p = 0; p < meas.txCount; ++p)
                for (int q = 0; q < meas.rxCount; ++q)
                    blk(q, p) = meas.data[meas.index(m, fIdx[f], p, q)];
            blocks[static_cast<std::size_t>(m) * freqsHz.size() + f] = std::move(blk);
        }
    }
    return blocks;
}

// ---------------------------------------------------------------------------
// State plumbing

void refresh_chi_freq(CsiState& state, const InversionOperators& ops) {
    const int F = ops.freqCount();
    state.chiFreq.resize(static_cast<std::size_t>(F));
    if (state.complexChi) {
        state.chiFreq[0] = state.chiRaw;
        return;
    }
    for (int f = 0; f < F; ++f) {
        const double omega = 2.0 * pi * ops.freqsHz[static_cast<std::size_t>(f)];
        state.chiFreq[static_cast<std::size_t>(f)] =
            state.dEps.cast<cplx>() - cplx(0.0, 1.0) * (state.sigma / (omega * eps0)).cast<cplx>();
    }
}

void refresh_eta_d(CsiState& state, const InversionOperators& ops) {
    double sum = 0.0;
    for (int m = 0; m < ops.cycles; ++m)
        for (int f = 0; f < ops.freqCount(); ++f)
            sum += col_scale(ops.eInc[static_cast<std::size_t>(ops.block(m, f))],
                             state.chiFreq[static_cast<std::size_t>(f)])
                       .squaredNorm();
    state.etaD = 1.0 / std::max(sum, kEtaFloor);
}

void refresh_residuals(CsiState& state, const InversionOperators& ops,
                       const std::vector<Eigen::MatrixXcd>& data) {
    require_block_shapes(ops, data, "refresh_residuals");
    const int B = ops.blockCount();
    state.rho.resize(static_cast<std::size_t>(B));
    state.xi.resize(static_cast<std::size_t>(B));
    state.gamma.resize(static_cast<std::size_t>(B));
    for (int m = 0; m < ops.cycles; ++m) {
        for (int f = 0; f < ops.freqCount(); ++f) {
            const std::size_t b = static_cast<std::size_t>(ops.block(m, f));
            const Eigen::MatrixXcd ce =
                col_scale(state.eTot[b], state.chiFreq[static_cast<std::size_t>(f)]);
            state.rho[b] = data[b] - ops.phi[b] * state.j[b];
            state.xi[b] = data[b] - ops.phi[b] * ce;
            state.gamma[b] = ce - state.j[b];
        }
    }
}

double cost_j(const CsiState& state) {
    double s = 0.0;
    double d = 0.0;
    for (std::size_t b = 0; b < state.rho.size(); ++b) {
        s += state.rho[b].squaredNorm() + state.xi[b].squaredNorm();
        d += state.gamma[b].squaredNorm();
    }
    return state.etaS * s + state.etaD * d;
}

double cost_chi(const CsiState& state) {
    double s = 0.0;
    double d = 0.0;
    for (std::size_t b = 0; b < state.xi.size(); ++b) {
        s += state.xi[b].squaredNorm();
        d += state.gamma[b].squaredNorm();
    }
    return state.etaS * s + state.etaD * d;
}

CsiState initialize_state(const InversionOperators& ops,
                          const std::vector<Eigen::MatrixXcd>& data, bool complexChi) {
    require_block_shapes(ops, data, "initialize_state");
    if (complexChi && ops.freqCount() != 1)
        fail_validation("initialize_state: raw complex contrast requires a single frequency");
    const int B = ops.blockCount();
    const int N = ops.domain.cells();

    double dataNorm = 0.0;
    for (const Eigen::MatrixXcd& blk : data) dataNorm += blk.squaredNorm();
    if (dataNorm <= 0.0) fail_validation("initialize_state: all measurements are zero");

    CsiState state;
    state.complexChi = complexChi;
    state.etaS = 1.0 / dataNorm;
    state.j.resize(static_cast<std::size_t>(B));
    state.eTot.resize(static_cast<std::size_t>(B));

    // Back-projection start: j0 = (WHf scaled by its per-source Rayleigh step).
    for (int m = 0; m < ops.cycles; ++m) {
        for (int f = 0; f < ops.freqCount(); ++f) {
            const std::size_t b = static_cast<std::size_t>(ops.block(m, f));
            const Eigen::MatrixXcd bp = ops.phi[b].adjoint() * data[b];  // N×P
            const Eigen::MatrixXcd fwd = ops.phi[b] * bp;                // Q×P
            Eigen::MatrixXcd j0(N, ops.txCount);
            for (int p = 0; p < ops.txCount; ++p) {
                const double na = bp.col(p).squaredNorm();
                const double nb = fwd.col(p).squaredNorm();
                if (nb > 0.0)
                    j0.col(p) = (na / nb) * bp.col(p);
                else
                    j0.col(p).setZero();
            }
            state.eTot[b] = ops.eInc[b] + ops.green[static_cast<std::size_t>(f)]->apply(j0);
            state.j[b] = std::move(j0);
        }
    }

    // Contrast seed: cell-wise least squares of j against the total field.
    Eigen::VectorXcd num = Eigen::VectorXcd::Zero(N);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(N);
    for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b) {
        num += state.j[b].cwiseProduct(state.eTot[b].conjugate()).rowwise().sum();
        den += state.eTot[b].rowwise().squaredNorm();
    }
    Eigen::VectorXcd chi0(N);
    for (int n = 0; n < N; ++n) chi0(n) = den(n) > 0.0 ? num(n) / den(n) : cplx(0.0, 0.0);

    if (complexChi) {
        state.chiRaw = std::move(chi0);
    } else {
        const double omegaRef = 2.0 * pi * ops.freqsHz.front();
        state.dEps = chi0.real();
        state.sigma = -chi0.imag() * omegaRef * eps0;
    }
    refresh_chi_freq(state, ops);
    refresh_eta_d(state, ops);
    refresh_residuals(state, ops, data);
    state.iter = 0;
    return state;
}

// ---------------------------------------------------------------------------
// Gradients and line searches

std::vector<Eigen::MatrixXcd> grad_j(const CsiState& state, const InversionOperators& ops) {
    const int B = ops.blockCount();
    std::vector<Eigen::MatrixXcd> g(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const int f = static_cast<int>(b) % ops.freqCount();
        const Eigen::VectorXcd chiC = state.chiFreq[static_cast<std::size_t>(f)].conjugate();
        const Eigen::MatrixXcd bpRho = ops.phi[b].adjoint() * state.rho[b];
        const Eigen::MatrixXcd bpXi = ops.phi[b].adjoint() * state.xi[b];
        const Eigen::MatrixXcd inner =
            state.etaD * col_scale(state.gamma[b], chiC) - state.etaS * col_scale(bpXi, chiC);
        g[b] = -state.etaS * bpRho - state.etaD * state.gamma[b] +
               ops.green[static_cast<std::size_t>(f)]->apply_adjoint(inner);
    });
    return g;
}

std::vector<Eigen::VectorXcd> grad_chi_per_freq(const CsiState& state,
                                                const InversionOperators& ops) {
    const int B = ops.blockCount();
    const int F = ops.freqCount();
    std::vector<Eigen::VectorXcd> perBlock(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const Eigen::MatrixXcd bpXi = ops.phi[b].adjoint() * state.xi[b];
        perBlock[b] = state.eTot[b]
                          .conjugate()
                          .cwiseProduct(state.etaD * state.gamma[b] - state.etaS * bpXi)
                          .rowwise()
                          .sum();
    });
    std::vector<Eigen::VectorXcd> g(static_cast<std::size_t>(F),
                                    Eigen::VectorXcd::Zero(ops.domain.cells()));
    for (int m = 0; m < ops.cycles; ++m)
        for (int f = 0; f < F; ++f)
            g[static_cast<std::size_t>(f)] += perBlock[static_cast<std::size_t>(ops.block(m, f))];
    return g;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> grad_chi_physical(const CsiState& state,
                                                              const InversionOperators& ops) {
    const std::vector<Eigen::VectorXcd> perFreq = grad_chi_per_freq(state, ops);
    Eigen::VectorXd gE = Eigen::VectorXd::Zero(ops.domain.cells());
    Eigen::VectorXd gS = Eigen::VectorXd::Zero(ops.domain.cells());
    for (int f = 0; f < ops.freqCount(); ++f) {
        const double omega = 2.0 * pi * ops.freqsHz[static_cast<std::size_t>(f)];
        gE += 2.0 * perFreq[static_cast<std::size_t>(f)].real();
        gS += (-2.0 / (omega * eps0)) * perFreq[static_cast<std::size_t>(f)].imag();
    }
    return {std::move(gE), std::move(gS)};
}

namespace {

/// Shared quadratic line-search core for the contrast-source step.  Returns
/// alpha and, through the out-parameters, the receiver-space images of the
/// direction needed for incremental residual updates.
double alpha_core(const CsiState& state, const InversionOperators& ops,
                  const std::vector<Eigen::MatrixXcd>& nu,
                  const std::vector<Eigen::MatrixXcd>& eNu,
                  std::vector<Eigen::MatrixXcd>* phiNuOut,
                  std::vector<Eigen::MatrixXcd>* phiChiENuOut, bool* zeroCurvature) {
    const int B = ops.blockCount();
    std::vector<double> aPart(static_cast<std::size_t>(B));
    std::vector<double> bPart(static_cast<std::size_t>(B));
    std::vector<Eigen::MatrixXcd> u1(static_cast<std::size_t>(B));
    std::vector<Eigen::MatrixXcd> u2(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const int f = static_cast<int>(b) % ops.freqCount();
        const Eigen::VectorXcd& chi = state.chiFreq[static_cast<std::size_t>(f)];
        const Eigen::MatrixXcd chiENu = col_scale(eNu[b], chi);
        const Eigen::MatrixXcd v = chiENu - nu[b];
        u1[b] = ops.phi[b] * nu[b];
        u2[b] = ops.phi[b] * chiENu;
        aPart[b] = state.etaS * u1[b].squaredNorm() + state.etaD * v.squaredNorm() +
                   state.etaS * u2[b].squaredNorm();
        bPart[b] = -state.etaS * re_inner(u1[b], state.rho[b]) +
                   state.etaD * re_inner(v, state.gamma[b]) -
                   state.etaS * re_inner(u2[b], state.xi[b]);
    });
    double a = 0.0;
    double bb = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b) {
        a += aPart[b];
        bb += bPart[b];
    }
    if (phiNuOut != nullptr) *phiNuOut = std::move(u1);
    if (phiChiENuOut != nullptr) *phiChiENuOut = std::move(u2);
    if (!(a > 0.0)) {
        if (zeroCurvature != nullptr) *zeroCurvature = true;
        return 0.0;
    }
    if (zeroCurvature != nullptr) *zeroCurvature = false;
    return -bb / a;
}

/// Quadratic line-search core for the contrast step.  w holds the direction
/// mapped into per-frequency complex contrast space.
double beta_core(const CsiState& state, const InversionOperators& ops,
                 const std::vector<Eigen::VectorXcd>& w, std::vector<Eigen::MatrixXcd>* s1Out,
                 std::vector<Eigen::MatrixXcd>* s2Out, bool* zeroCurvature) {
    const int B = ops.blockCount();
    std::vector<double> aPart(static_cast<std::size_t>(B));
    std::vector<double> bPart(static_cast<std::size_t>(B));
    std::vector<Eigen::MatrixXcd> s1(static_cast<std::size_t>(B));
    std::vector<Eigen::MatrixXcd> s2(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const int f = static_cast<int>(b) % ops.freqCount();
        s1[b] = col_scale(state.eTot[b], w[static_cast<std::size_t>(f)]);
        s2[b] = ops.phi[b] * s1[b];
        aPart[b] = state.etaD * s1[b].squaredNorm() + state.etaS * s2[b].squaredNorm();
        bPart[b] =
            state.etaD * re_inner(s1[b], state.gamma[b]) - state.etaS * re_inner(s2[b], state.xi[b]);
    });
    double a = 0.0;
    double bb = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b) {
        a += aPart[b];
        bb += bPart[b];
    }
    if (s1Out != nullptr) *s1Out = std::move(s1);
    if (s2Out != nullptr) *s2Out = std::move(s2);
    if (!(a > 0.0)) {
        if (zeroCurvature != nullptr) *zeroCurvature = true;
        return 0.0;
    }
    if (zeroCurvature != nullptr) *zeroCurvature = false;
    return -bb / a;
}

std::vector<Eigen::VectorXcd> physical_direction_to_chi(const InversionOperators& ops,
                                                        const Eigen::VectorXd& nuEps,
                                                        const Eigen::VectorXd& nuSigma) {
    std::vector<Eigen::VectorXcd> w(static_cast<std::size_t>(ops.freqCount()));
    for (int f = 0; f < ops.freqCount(); ++f) {
        const double omega = 2.0 * pi * ops.freqsHz[static_cast<std::size_t>(f)];
        w[static_cast<std::size_t>(f)] =
            nuEps.cast<cplx>() - cplx(0.0, 1.0) * (nuSigma / (omega * eps0)).cast<cplx>();
    }
    return w;
}

/// Recomputes the state error for the current (chi, eTot, j).
void recompute_gamma(CsiState& state, const InversionOperators& ops) {
    parallel_for(state.gamma.size(), [&](std::size_t b) {
        const int f = static_cast<int>(b) % ops.freqCount();
        state.gamma[b] =
            col_scale(state.eTot[b], state.chiFreq[static_cast<std::size_t>(f)]) - state.j[b];
    });
}

}  // namespace

double line_search_alpha(const CsiState& state, const InversionOperators& ops,
                         const std::vector<Eigen::MatrixXcd>& nu,
                         const std::vector<Eigen::MatrixXcd>& eNu) {
    if (nu.size() != static_cast<std::size_t>(ops.blockCount()) || nu.size() != eNu.size())
        fail_validation("line_search_alpha: direction block count mismatch");
    return alpha_core(state, ops, nu, eNu, nullptr, nullptr, nullptr);
}

double line_search_beta(const CsiState& state, const InversionOperators& ops,
                        const Eigen::VectorXd& nuEps, const Eigen::VectorXd& nuSigma) {
    if (nuEps.size() != ops.domain.cells() || nuSigma.size() != ops.domain.cells())
        fail_validation("line_search_beta: direction length mismatch");
    return beta_core(state, ops, physical_direction_to_chi(ops, nuEps, nuSigma), nullptr, nullptr,
                     nullptr);
}

double line_search_beta_complex(const CsiState& state, const InversionOperators& ops,
                                const Eigen::VectorXcd& nuChi) {
    if (ops.freqCount() != 1) fail_validation("line_search_beta_complex: single frequency only");
    if (nuChi.size() != ops.domain.cells())
        fail_validation("line_search_beta_complex: direction length mismatch");
    return beta_core(state, ops, {nuChi}, nullptr, nullptr, nullptr);
}

// ---------------------------------------------------------------------------
// Main loop

InversionResult run_inversion(const InversionOperators& ops,
                              const std::vector<Eigen::MatrixXcd>& data,
                              const InversionConfig& cfg) {
    require_block_shapes(ops, data, "run_inversion");
    if (cfg.maxIters < 0) fail_validation("run_inversion: negative iteration budget");
    if (cfg.truthEpsR && !cfg.truthEpsR->grid.sameRasterAs(ops.domain))
        fail_validation("run_inversion: truth raster does not match the inversion domain");

    const int B = ops.blockCount();
    const int F = ops.freqCount();
    const int N = ops.domain.cells();
    const double omegaRef = 2.0 * pi * ops.freqsHz.front();

    CsiState state = initialize_state(ops, data, cfg.complexChi);

    InversionResult res;
    res.history.reserve(static_cast<std::size_t>(cfg.maxIters));
    DivergenceGuard guard;

    // Conjugate-direction memory.
    std::vector<Eigen::MatrixXcd> gOld;
    std::vector<Eigen::MatrixXcd> nuOld;
    Eigen::VectorXd gEOld, gSOld, nuEOld, nuSOld;
    Eigen::VectorXcd gCOld, nuCOld;

    bool warnedAlpha = false;
    bool warnedBeta = false;

    for (int iter = 1; iter <= cfg.maxIters; ++iter) {
        // --- contrast-source update -------------------------------------
        refresh_eta_d(state, ops);
        const double costJPre = cost_j(state);

        std::vector<Eigen::MatrixXcd> g = grad_j(state, ops);
        std::vector<Eigen::MatrixXcd> nu(static_cast<std::size_t>(B));
        if (gOld.empty()) {
            for (int b = 0; b < B; ++b) nu[static_cast<std::size_t>(b)] = -g[static_cast<std::size_t>(b)];
        } else {
            for (int m = 0; m < ops.cycles; ++m) {
                double num = 0.0;
                double den = 0.0;
                for (int f = 0; f < F; ++f) {
                    const std::size_t b = static_cast<std::size_t>(ops.block(m, f));
                    num += re_inner(g[b], g[b] - gOld[b]);
                    den += gOld[b].squaredNorm();
                }
                double pr = den > 0.0 ? num / den : 0.0;
                if (!std::isfinite(pr) || pr < 0.0) pr = 0.0;
                for (int f = 0; f < F; ++f) {
                    const std::size_t b = static_cast<std::size_t>(ops.block(m, f));
                    nu[b] = -g[b] + pr * nuOld[b];
                }
            }
        }
        gOld = std::move(g);

        std::vector<Eigen::MatrixXcd> eNu(static_cast<std::size_t>(B));
        parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
            const int f = static_cast<int>(b) % F;
            eNu[b] = ops.green[static_cast<std::size_t>(f)]->apply(nu[b]);
        });

        std::vector<Eigen::MatrixXcd> phiNu, phiChiENu;
        bool zeroCurv = false;
        const double alpha = alpha_core(state, ops, nu, eNu, &phiNu, &phiChiENu, &zeroCurv);
        if (zeroCurv) {
            ++res.zeroCurvatureAlpha;
            if (!warnedAlpha) {
                warn("run_inversion: zero-curvature contrast-source step, alpha = 0");
                warnedAlpha = true;
            }
        }

        parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
            state.j[b] += alpha * nu[b];
            state.eTot[b] += alpha * eNu[b];
            state.rho[b] -= alpha * phiNu[b];
            state.xi[b] -= alpha * phiChiENu[b];
        });
        recompute_gamma(state, ops);
        nuOld = std::move(nu);

        const double costJ = cost_j(state);
        const bool diverged = guard.update(costJ);

        // --- contrast update ---------------------------------------------
        const double costChiPre = cost_chi(state);

        double beta = 0.0;
        if (cfg.complexChi) {
            const Eigen::VectorXcd gC = grad_chi_per_freq(state, ops)[0];
            Eigen::VectorXcd nuC;
            if (gCOld.size() == 0) {
                nuC = -gC;
            } else {
                const double num = (gC.conjugate().cwiseProduct(gC - gCOld)).sum().real();
                const double den = gCOld.squaredNorm();
                double pr = den > 0.0 ? num / den : 0.0;
                if (!std::isfinite(pr) || pr < 0.0) pr = 0.0;
                nuC = -gC + pr * nuCOld;
            }
            gCOld = gC;

            std::vector<Eigen::MatrixXcd> s2;
            bool zc = false;
            beta = beta_core(state, ops, {nuC}, nullptr, &s2, &zc);
            if (zc) {
                ++res.zeroCurvatureBeta;
                if (!warnedBeta) {
                    warn("run_inversion: zero-curvature contrast step, beta = 0");
                    warnedBeta = true;
                }
            }
            state.chiRaw += beta * nuC;
            if (cfg.clamp)
                for (int n = 0; n < N; ++n)
                    state.chiRaw(n) = cplx(std::max(state.chiRaw(n).real(), 0.0),
                                           std::min(state.chiRaw(n).imag(), 0.0));
            refresh_chi_freq(state, ops);
            if (cfg.clamp) {
                parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
                    state.xi[b] = data[b] - ops.phi[b] * col_scale(state.eTot[b], state.chiFreq[0]);
                });
            } else {
                parallel_for(static_cast<std::size_t>(B),
                             [&](std::size_t b) { state.xi[b] -= beta * s2[b]; });
            }
            nuCOld = std::move(nuC);
        } else {
            auto [gE, gS] = grad_chi_physical(state, ops);
            Eigen::VectorXd nuE, nuS;
            if (gEOld.size() == 0) {
                nuE = -gE;
                nuS = -gS;
            } else {
                const double num = (gE - gEOld).dot(gE) + (gS - gSOld).dot(gS);
                const double den = gEOld.squaredNorm() + gSOld.squaredNorm();
                double pr = den > 0.0 ? num / den : 0.0;
                if (!std::isfinite(pr) || pr < 0.0) pr = 0.0;
                nuE = -gE + pr * nuEOld;
                nuS = -gS + pr * nuSOld;
            }
            gEOld = std::move(gE);
            gSOld = std::move(gS);

            std::vector<Eigen::MatrixXcd> s2;
            bool zc = false;
            beta = beta_core(state, ops, physical_direction_to_chi(ops, nuE, nuS), nullptr, &s2,
                             &zc);
            if (zc) {
                ++res.zeroCurvatureBeta;
                if (!warnedBeta) {
                    warn("run_inversion: zero-curvature contrast step, beta = 0");
                    warnedBeta = true;
                }
            }
            state.dEps += beta * nuE;
            state.sigma += beta * nuS;
            if (cfg.clamp) {
                state.dEps = state.dEps.cwiseMax(0.0);
                state.sigma = state.sigma.cwiseMax(0.0);
            }
            refresh_chi_freq(state, ops);
            if (cfg.clamp) {
                parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
                    const int f = static_cast<int>(b) % F;
                    state.xi[b] =
                        data[b] - ops.phi[b] * col_scale(state.eTot[b],
                                                         state.chiFreq[static_cast<std::size_t>(f)]);
                });
            } else {
                parallel_for(static_cast<std::size_t>(B),
                             [&](std::size_t b) { state.xi[b] -= beta * s2[b]; });
            }
            nuEOld = std::move(nuE);
            nuSOld = std::move(nuS);
        }
        recompute_gamma(state, ops);

        const double costChi = cost_chi(state);

        double psnrDb = std::numeric_limits<double>::quiet_NaN();
        if (cfg.truthEpsR) {
            RealGrid recon;
            recon.grid = ops.domain;
            recon.values.resize(static_cast<std::size_t>(N));
            const Eigen::VectorXd de =
                cfg.complexChi ? Eigen::VectorXd(state.chiRaw.real()) : state.dEps;
            for (int n = 0; n < N; ++n)
                recon.values[static_cast<std::size_t>(n)] = cfg.bgEpsR + de(n);
            psnrDb = psnr(recon, *cfg.truthEpsR);
        }

        res.history.push_back({iter, costJ, costChi, psnrDb, costJPre, costChiPre});
        state.iter = iter;
        if (diverged) {
            res.diverged = true;
            warn("run_inversion: cost diverged from its running minimum; stopping at iteration " +
                 std::to_string(iter));
            break;
        }
    }

    // Package the physical maps.
    Eigen::VectorXd dEps, sigma;
    if (cfg.complexChi) {
        if (state.chiRaw.size() == 0) {
            dEps = Eigen::VectorXd::Zero(N);
            sigma = Eigen::VectorXd::Zero(N);
        } else {
            dEps = state.chiRaw.real();
            sigma = -state.chiRaw.imag() * omegaRef * eps0;
        }
    } else {
        dEps = state.dEps;
        sigma = state.sigma;
    }
    res.contrast.grid = ops.domain;
    res.contrast.dEps.assign(dEps.data(), dEps.data() + N);
    res.contrast.sigma.assign(sigma.data(), sigma.data() + N);
    res.epsR.grid = ops.domain;
    res.epsR.values.resize(static_cast<std::size_t>(N));
    res.sigma.grid = ops.domain;
    res.sigma.values.resize(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        res.epsR.values[static_cast<std::size_t>(n)] = cfg.bgEpsR + dEps(n);
        res.sigma.values[static_cast<std::size_t>(n)] = sigma(n);
    }
    res.etaS = state.etaS;
    res.etaD = state.etaD;
    return res;
}

// ---------------------------------------------------------------------------
// Crime-mode synthesis through the inversion operators

namespace {

/// Unpreconditioned BiCGStab on an abstract operator; deterministic.
Eigen::VectorXcd bicgstab(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& op,
                          const Eigen::VectorXcd& b, double tol) {
    const double bNorm = b.norm();
    if (bNorm == 0.0) return Eigen::VectorXcd::Zero(b.size());
    Eigen::VectorXcd x = b;  // warm start at the incident field
    Eigen::VectorXcd r = b - op(x);
    const Eigen::VectorXcd rHat = r;
    Eigen::VectorXcd p = Eigen::VectorXcd::Zero(b.size());
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(b.size());
    cplx rhoOld(1.0, 0.0), alpha(1.0, 0.0), omega(1.0, 0.0);
    for (int it = 0; it < kFixedPointMaxIters; ++it) {
        if (r.norm() <= tol * bNorm) break;
        const cplx rho = rHat.dot(r);
        if (std::abs(rho) < 1e-300 || std::abs(omega) < 1e-300)
            fail_numerical("crime_total_field: BiCGStab breakdown");
        const cplx betaC = (rho / rhoOld) * (alpha / omega);
        p = r + betaC * (p - omega * v);
        v = op(p);
        alpha = rho / rHat.dot(v);
        const Eigen::VectorXcd s = r - alpha * v;
        if (s.norm() <= tol * bNorm) {
            x += alpha * p;
            r = s;
            break;
        }
        const Eigen::VectorXcd t = op(s);
        omega = t.dot(s) / t.dot(t);
        x += alpha * p + omega * s;
        r = s - omega * t;
        rhoOld = rho;
    }
    if ((b - op(x)).norm() > 10.0 * tol * bNorm)
        fail_numerical("crime_total_field: fixed-point solve did not converge");
    return x;
}

}  // namespace

Eigen::MatrixXcd crime_total_field(const DomainGreenOperator& green, const Eigen::VectorXcd& chi,
                                   const Eigen::MatrixXcd& eInc, double tol) {
    if (chi.size() != green.domain().cells() || eInc.rows() != chi.size())
        fail_validation("crime_total_field: size mismatch");
    auto op = [&](const Eigen::VectorXcd& x) -> Eigen::VectorXcd {
        return x - green.apply(x.cwiseProduct(chi));
    };
    Eigen::MatrixXcd out(eInc.rows(), eInc.cols());
    for (Eigen::Index p = 0; p < eInc.cols(); ++p) out.col(p) = bicgstab(op, eInc.col(p), tol);
    return out;
}

std::vector<Eigen::MatrixXcd> crime_synthesize(const InversionOperators& ops,
                                               const ContrastMap& contrast) {
    if (!contrast.grid.sameRasterAs(ops.domain))
        fail_validation("crime_synthesize: contrast raster does not match the inversion domain");
    const int B = ops.blockCount();
    const int N = ops.domain.cells();
    std::vector<Eigen::MatrixXcd> data(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
        const int f = static_cast<int>(b) % ops.freqCount();
        const double omega = 2.0 * pi * ops.freqsHz[static_cast<std::size_t>(f)];
        Eigen::VectorXcd chi(N);
        for (int n = 0; n < N; ++n) chi(n) = contrast.chi(n, omega);
        const Eigen::MatrixXcd eTot =
            crime_total_field(*ops.green[static_cast<std::size_t>(f)], chi, ops.eInc[b]);
        data[b] = ops.phi[b] * col_scale(eTot, chi);
    });
    return data;
}

}  // namespace emiv
