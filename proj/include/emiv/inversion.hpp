#pragma once

/// @brief Motion-compensated cross-correlated contrast source inversion.
///
/// The reconstruction works in the reference frame of one measurement cycle:
/// per-cycle translation estimates move every transmitter and receiver the
/// opposite way, after which the target is stationary and all cycles share
/// one contrast.  Three residual families drive the optimization
///   rho  = f − Φj                 (data error, receiver space)
///   gamma = χ⊙eTot − j            (state error, domain)
///   xi   = f − Φ(χ⊙eTot)          (cross-correlated error, receiver space)
/// with eTot = eInc + G j, G the background domain Green operator.  The cost
/// for the contrast-source update is
///   etaS·Σ‖rho‖² + etaD·Σ‖gamma‖² + etaS·Σ‖xi‖²,
/// the contrast update drops the rho term; both are minimized by exact
/// line searches along Polak–Ribière directions.  Sums run over cycles,
/// frequencies and transmitters; one physical pair (Δε_r, σ) is shared
/// across frequencies through χ(ω) = Δε_r − iσ/(ωε₀).
///
/// The static multi-cycle baseline is this same algorithm with all shifts
/// forced to zero; a single-cycle run reduces it to classic CC-CSI.

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "emiv/grid.hpp"
#include "emiv/meas.hpp"
#include "emiv/metrics.hpp"
#include "emiv/scene.hpp"

namespace emiv {

/// @brief Background Green operator of the inversion raster at one frequency.
///
/// Built once per frequency from a single large centered background solve of
/// the finite-difference operator; the response is mirror-symmetrized and
/// applied as a block-Toeplitz convolution via padded FFTs, so one apply to a
/// multi-source block costs O(P·N log N).  The operator is complex symmetric
/// (G = Gᵀ), hence the adjoint is conj∘G∘conj.
class DomainGreenOperator {
  public:
    DomainGreenOperator(const Grid2D& domain, double omega);
    ~DomainGreenOperator();
    DomainGreenOperator(DomainGreenOperator&&) noexcept;
    DomainGreenOperator& operator=(DomainGreenOperator&&) noexcept;
    DomainGreenOperator(const DomainGreenOperator&) = delete;
    DomainGreenOperator& operator=(const DomainGreenOperator&) = delete;

    /// y = G·x, column by column; x is N×P (one column per source).
    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& x) const;
    /// y = Gᴴ·x = conj(G·conj(x)).
    Eigen::MatrixXcd apply_adjoint(const Eigen::MatrixXcd& x) const;

    /// Convolution kernel sample for a cell offset (dx, dy), |dx| < nx.
    cplx kernel_entry(int dx, int dy) const;

    const Grid2D& domain() const;
    double omega() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Receiver sensing matrix (Q×N): entry (q, n) radiates domain cell n to
/// receiver q through the regularized outgoing-wave kernel.  Positions closer
/// than one pitch trip the self-cell regularization; the count of such
/// entries is reported so callers can warn.
Eigen::MatrixXcd sensing_matrix(const std::vector<Vec2>& rx, const Grid2D& domain, double omega,
                                int* regularizedEntries = nullptr);

/// @brief Frozen linear operators of one inversion run.
///
/// Per block (cycle m, frequency f), indexed b = m·F + f:
///   phi[b]   Q×N sensing matrix from the motion-compensated receivers,
///   eInc[b]  N×P incident fields from the motion-compensated transmitters,
/// plus one shared Green operator per frequency.  At the reference cycle the
/// compensation is the identity, so phi equals the static sensing matrix.
struct InversionOperators {
    Grid2D domain;
    std::vector<double> freqsHz;  // ascending
    int cycles = 0;
    int txCount = 0;
    int rxCount = 0;
    int refCycle = 0;
    std::vector<std::shared_ptr<const DomainGreenOperator>> green;  // per frequency
    std::vector<Eigen::MatrixXcd> phi;                              // per block, Q×N
    std::vector<Eigen::MatrixXcd> eInc;                             // per block, N×P

    int freqCount() const { return static_cast<int>(freqsHz.size()); }
    int blockCount() const { return cycles * freqCount(); }
    int block(int m, int f) const { return m * freqCount() + f; }
};

/// Builds all operators for the given compensating shifts.  Pass sharedGreen
/// to reuse Green operators across runs on the same raster and frequencies.
InversionOperators build_inversion_operators(
    const ArrayLayout& arrays, const ShiftSet& shifts, const std::vector<double>& freqsHz,
    const Grid2D& domain,
    std::vector<std::shared_ptr<const DomainGreenOperator>> sharedGreen = {});

/// Extracts per-block Q×P data matrices for the requested frequency subset
/// (matched against the set's frequency list to 1e-9 relative).
std::vector<Eigen::MatrixXcd> select_data(const MeasurementSet& meas,
                                          const std::vector<double>& freqsHz);

/// @brief Iterate state of the inversion.
///
/// Residuals are kept consistent with (j, chi, eTot) at all times; etaD is
/// refreshed once per iteration (before the contrast-source update) and kept
/// through the contrast update, so cost_chi always uses the stored value.
struct CsiState {
    std::vector<Eigen::MatrixXcd> j;      // per block, N×P contrast sources
    std::vector<Eigen::MatrixXcd> eTot;   // per block, N×P total fields
    std::vector<Eigen::MatrixXcd> gamma;  // per block, N×P state error
    std::vector<Eigen::MatrixXcd> rho;    // per block, Q×P data error
    std::vector<Eigen::MatrixXcd> xi;     // per block, Q×P cross-correlated error

    Eigen::VectorXd dEps;    // physical unknowns on the domain raster
    Eigen::VectorXd sigma;   // [S/m]
    Eigen::VectorXcd chiRaw; // raw complex contrast (complexChi mode only)
    std::vector<Eigen::VectorXcd> chiFreq;  // per frequency, derived from the unknowns

    double etaS = 0.0;
    double etaD = 0.0;
    int iter = 0;
    bool complexChi = false;
};

/// Algorithm start: back-projected contrast sources with the classic
/// per-source step (‖Φᴴf‖²/‖ΦΦᴴf‖²)Φᴴf, fields eTot = eInc + G j, and the
/// contrast seed χ₀ = Σ j⊙ē / Σ|e|² (cell-wise, summed over blocks and
/// sources).  The physical pair reads Δε_r = Re χ₀ and σ = −Im χ₀·ω_ref·ε₀
/// at the lowest frequency; complexChi keeps χ₀ verbatim (single frequency
/// only).  Fails on all-zero measurements.
CsiState initialize_state(const InversionOperators& ops,
                          const std::vector<Eigen::MatrixXcd>& data, bool complexChi = false);

/// Rebuilds chiFreq from the current unknowns (dEps/sigma or chiRaw).
void refresh_chi_freq(CsiState& state, const InversionOperators& ops);

/// etaD = 1 / max(Σ‖χ⊙eInc‖², 1e-30), fixed block order.
void refresh_eta_d(CsiState& state, const InversionOperators& ops);

/// Recomputes all residuals from scratch for the current (j, chi, eTot).
void refresh_residuals(CsiState& state, const InversionOperators& ops,
                       const std::vector<Eigen::MatrixXcd>& data);

/// etaS·Σ‖rho‖² + etaD·Σ‖gamma‖² + etaS·Σ‖xi‖² over all blocks.
double cost_j(const CsiState& state);

/// etaD·Σ‖gamma‖² + etaS·Σ‖xi‖² (stored etaD, i.e. the iteration-start one).
double cost_chi(const CsiState& state);

/// Conjugate gradient of cost_j w.r.t. the contrast sources, per block:
///   g = −etaS·Φᴴrho − etaD·gamma + Gᴴ(etaD·χ̄⊙gamma − etaS·χ̄⊙(Φᴴxi)).
/// The first-order change along a perturbation δ is 2·Re⟨g, δ⟩.
std::vector<Eigen::MatrixXcd> grad_j(const CsiState& state, const InversionOperators& ops);

/// Per-frequency conjugate gradient of cost_chi w.r.t. χ(ω):
///   G_ω = Σ_{m,p} ēTot⊙(etaD·gamma − etaS·Φᴴxi).
std::vector<Eigen::VectorXcd> grad_chi_per_freq(const CsiState& state,
                                                const InversionOperators& ops);

/// Physical-pair gradient via the chain rule ∂χ/∂Δε = 1, ∂χ/∂σ = −i/(ωε₀):
/// gE = 2ΣRe G_ω, gS = −2ΣIm G_ω/(ωε₀).
std::pair<Eigen::VectorXd, Eigen::VectorXd> grad_chi_physical(const CsiState& state,
                                                              const InversionOperators& ops);

/// Closed-form minimizer of cost_j(j + α·nu) given eNu = G·nu per block.
/// Zero curvature (all-zero directions) returns 0.
double line_search_alpha(const CsiState& state, const InversionOperators& ops,
                         const std::vector<Eigen::MatrixXcd>& nu,
                         const std::vector<Eigen::MatrixXcd>& eNu);

/// Closed-form minimizer of cost_chi along a physical-pair direction.
double line_search_beta(const CsiState& state, const InversionOperators& ops,
                        const Eigen::VectorXd& nuEps, const Eigen::VectorXd& nuSigma);

/// Raw-χ variant (complexChi mode).
double line_search_beta_complex(const CsiState& state, const InversionOperators& ops,
                                const Eigen::VectorXcd& nuChi);

/// Safety net, not a convergence test: trips once the cost has exceeded its
/// running minimum by more than (factor − 1) for `limit` consecutive updates.
struct DivergenceGuard {
    double factor = 1.1;
    int limit = 50;
    double runningMin = std::numeric_limits<double>::infinity();
    int streak = 0;

    bool update(double cost) {
        streak = cost > factor * runningMin ? streak + 1 : 0;
        if (cost < runningMin) runningMin = cost;
        return streak >= limit;
    }
};

struct InversionConfig {
    int maxIters = 512;
    bool clamp = false;       // project Δε_r ≥ 0, σ ≥ 0 after each contrast step
    bool complexChi = false;  // optimize raw complex χ (single frequency only)
    double bgEpsR = 1.0;      // background for the ε̂_r output map
    std::optional<RealGrid> truthEpsR;  // per-iteration PSNR when present
};

struct InversionResult {
    ContrastMap contrast;  // Δε_r and σ on the inversion raster
    RealGrid epsR;         // ε̂_r = bgEpsR + Δε_r
    RealGrid sigma;        // σ̂ [S/m]
    std::vector<IterRecord> history;  // one row per iteration
    bool diverged = false;            // stopped by the divergence guard
    int zeroCurvatureAlpha = 0;
    int zeroCurvatureBeta = 0;
    double etaS = 0.0;
    double etaD = 0.0;
};

/// Runs the full iteration to the configured budget.  History rows carry the
/// costs after each update plus the pre-update values of the same iteration
/// (costJPre before the α-step, costChiPre before the β-step, both under the
/// iteration's η factors), so exact-line-search descent is auditable.  The
/// divergence guard stops the run once cost_j exceeds its running minimum by
/// more than 10% for 50 consecutive iterations.
InversionResult run_inversion(const InversionOperators& ops,
                              const std::vector<Eigen::MatrixXcd>& data,
                              const InversionConfig& cfg);

/// Total field of the fixed point (I − G·diag(χ))e = eInc, solved per column
/// by BiCGStab to relative tolerance tol.
Eigen::MatrixXcd crime_total_field(const DomainGreenOperator& green, const Eigen::VectorXcd& chi,
                                   const Eigen::MatrixXcd& eInc, double tol = 1e-12);

/// Synthesizes measurement blocks through the inversion operators themselves
/// (inverse-crime data, for algorithm validation only): per block solves the
/// fixed point and radiates f = Φ(χ⊙eTot).
std::vector<Eigen::MatrixXcd> crime_synthesize(const InversionOperators& ops,
                                               const ContrastMap& contrast);

}  // namespace emiv
