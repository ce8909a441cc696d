#pragma once

/// @brief 2-D TM Helmholtz operator on a uniform grid: 5-point stencil,
/// stretched-coordinate PML on all four sides, sparse LU factorization.
///
/// The assembled matrix is complex symmetric (A = Aᵀ, never Hermitian): face
/// conductances couple cell pairs with equal off-diagonal entries and the PML
/// stretch enters as a diagonal scaling.  An interior row at ε_r = 1 with PML
/// off reduces to the textbook stencil: −4/h² + k² on the diagonal and +1/h²
/// on the four neighbors.

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <memory>
#include <vector>

#include "emiv/constants.hpp"
#include "emiv/grid.hpp"

namespace emiv {

/// Stretched-coordinate PML profile: polynomial grading of the conductivity
/// with the classic normal-incidence reflection target.
struct PmlSpec {
    int cells = 10;                  // thickness of the absorbing frame, in cells
    double targetReflection = 1e-8;  // design reflection at normal incidence
    int grading = 3;                 // cubic polynomial grading
};

struct StiffnessOperator {
    Grid2D grid;  // full computational grid, PML frame included
    double omega = 0.0;
    PmlSpec pml;
    Eigen::SparseMatrix<cplx> A;
    std::vector<cplx> stretchDiag;  // Λ = s_x·s_y per cell (RHS weight inside PML)
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>> lu;

    bool factorized() const { return static_cast<bool>(lu); }
};

/// Assembles the Helmholtz operator at angular frequency omega.  epsRel holds
/// the complex relative permittivity per cell (ε_r − i·σ/(ω·ε0)); pass an
/// empty vector for a homogeneous free-space background.  pml.cells = 0
/// disables absorption (plain Dirichlet walls).
StiffnessOperator assemble_stiffness(const Grid2D& grid, double omega,
                                     const std::vector<cplx>& epsRel, const PmlSpec& pml);

/// Computes and attaches the sparse LU factorization.
void factorize(StiffnessOperator& op);

/// Direct solve with an a-posteriori residual check ‖A·e − rhs‖/‖rhs‖ ≤ tol.
std::vector<cplx> solve(const StiffnessOperator& op, const std::vector<cplx>& rhs,
                        double tol = 1e-10);

/// Discrete unit transmitter: a single nonzero of amplitude −ω·μ0/h² at the
/// grid node nearest (x, y).  The background solve of this source reproduces
/// the analytic incident field of incident_field() away from the source cell.
std::vector<cplx> point_source(const Grid2D& grid, double omega, double x, double y);

/// Analytic incident field of a unit transmitter at (txX, txY), evaluated at
/// every cell center with the self-cell regularization.
FieldGrid incident_field(const Grid2D& grid, double omega, double txX, double txY);

}  // namespace emiv
