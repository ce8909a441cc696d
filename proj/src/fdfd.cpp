#include "emiv/fdfd.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "emiv/errors.hpp"
#include "emiv/hankel.hpp"

namespace emiv {

namespace {

// Complex stretch factor s(depth) = 1 − i·σ(depth)/(ω·ε0) along one axis.
// `idx` may be half-integer (face positions); depth is measured from the PML
// inner interface so the outermost Dirichlet wall face sits at depth L.
struct AxisStretch {
    int n = 0;
    int pmlCells = 0;
    double h = 0.0;
    double omega = 0.0;
    double sigmaMax = 0.0;
    int grading = 3;

    cplx at(double idx) const {
        if (pmlCells <= 0) return 1.0;
        const double intoLeft = (pmlCells - 0.5) - idx;
        const double intoRight = idx - (n - pmlCells - 0.5);
        const double d = std::max(intoLeft, intoRight) * h;
        if (d <= 0.0) return 1.0;
        const double L = pmlCells * h;
        const double sigma = sigmaMax * std::pow(d / L, grading);
        return {1.0, -sigma / (omega * eps0)};
    }
};

AxisStretch make_stretch(int n, const PmlSpec& pml, double h, double omega) {
    AxisStretch s;
    s.n = n;
    s.pmlCells = pml.cells;
    s.h = h;
    s.omega = omega;
    s.grading = pml.grading;
    if (pml.cells > 0) {
        const double L = pml.cells * h;
        s.sigmaMax = -(pml.grading + 1) * eps0 * c0 * std::log(pml.targetReflection) / (2.0 * L);
    }
    return s;
}

}  // namespace

StiffnessOperator assemble_stiffness(const Grid2D& grid, double omega,
                                     const std::vector<cplx>& epsRel, const PmlSpec& pml) {
    check_grid(grid, "assemble_stiffness");
    if (omega <= 0.0) fail_validation("assemble_stiffness: omega must be positive");
    if (!epsRel.empty() && epsRel.size() != static_cast<size_t>(grid.cells()))
        fail_validation("assemble_stiffness: epsRel size does not match grid");
    if (pml.cells < 0 || 2 * pml.cells >= std::min(grid.nx, grid.ny))
        fail_validation("assemble_stiffness: PML frame does not fit the grid");
    if (pml.cells > 0 && (pml.targetReflection <= 0.0 || pml.targetReflection >= 1.0))
        fail_validation("assemble_stiffness: PML target reflection must be in (0,1)");

    const int nx = grid.nx, ny = grid.ny;
    const double h = grid.pitch;
    const double invH2 = 1.0 / (h * h);
    const double k0 = omega / c0;

    const AxisStretch sx = make_stretch(nx, pml, h, omega);
    const AxisStretch sy = make_stretch(ny, pml, h, omega);

    StiffnessOperator op;
    op.grid = grid;
    op.omega = omega;
    op.pml = pml;
    op.stretchDiag.resize(grid.cells());

    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<size_t>(grid.cells()) * 5);

    for (int iy = 0; iy < ny; ++iy) {
        const cplx syC = sy.at(iy);
        for (int ix = 0; ix < nx; ++ix) {
            const int n = grid.index(ix, iy);
            const cplx sxC = sx.at(ix);
            op.stretchDiag[n] = sxC * syC;
            const cplx eps = epsRel.empty() ? cplx(1.0, 0.0) : epsRel[n];
            cplx diag = sxC * syC * (k0 * k0) * eps;

            // x-faces at ix − 1/2 and ix + 1/2; the +1/2 face also writes the
            // symmetric neighbor coupling, the −1/2 face only the Dirichlet
            // wall term when ix = 0.
            const cplx wxm = syC / sx.at(ix - 0.5) * invH2;
            const cplx wxp = syC / sx.at(ix + 0.5) * invH2;
            diag -= wxm + wxp;
            if (ix + 1 < nx) {
                trips.emplace_back(n, grid.index(ix + 1, iy), wxp);
                trips.emplace_back(grid.index(ix + 1, iy), n, wxp);
                // Neighbor's −1/2 face weight is this wxp; fold its diagonal
                // contribution there when that cell is visited.
            }

            const cplx wym = sxC / sy.at(iy - 0.5) * invH2;
            const cplx wyp = sxC / sy.at(iy + 0.5) * invH2;
            diag -= wym + wyp;
            if (iy + 1 < ny) {
                trips.emplace_back(n, grid.index(ix, iy + 1), wyp);
                trips.emplace_back(grid.index(ix, iy + 1), n, wyp);
            }

            trips.emplace_back(n, n, diag);
        }
    }

    op.A.resize(grid.cells(), grid.cells());
    op.A.setFromTriplets(trips.begin(), trips.end());
    op.A.makeCompressed();
    return op;
}

void factorize(StiffnessOperator& op) {
    auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>();
    lu->analyzePattern(op.A);
    lu->factorize(op.A);
    if (lu->info() != Eigen::Success)
        fail_numerical("factorize: sparse LU factorization failed (singular assembly?)");
    op.lu = std::move(lu);
}

std::vector<cplx> solve(const StiffnessOperator& op, const std::vector<cplx>& rhs, double tol) {
    if (!op.factorized()) fail_validation("solve: operator is not factorized");
    if (rhs.size() != static_cast<size_t>(op.grid.cells()))
        fail_validation("solve: rhs size does not match grid");

    Eigen::Map<const Eigen::VectorXcd> b(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    const double bNorm = b.norm();
    if (bNorm == 0.0) return std::vector<cplx>(rhs.size(), cplx(0.0, 0.0));

    Eigen::VectorXcd x = op.lu->solve(b);
    const double res = (op.A * x - b).norm() / bNorm;
    if (!(res <= tol))
        fail_numerical("solve: residual " + std::to_string(res) + " exceeds tolerance");

    return {x.data(), x.data() + x.size()};
}

std::vector<cplx> point_source(const Grid2D& grid, double omega, double x, double y) {
    const int ix = std::clamp(static_cast<int>(std::lround((x - grid.originX) / grid.pitch)), 0,
                              grid.nx - 1);
    const int iy = std::clamp(static_cast<int>(std::lround((y - grid.originY) / grid.pitch)), 0,
                              grid.ny - 1);
    std::vector<cplx> rhs(grid.cells(), cplx(0.0, 0.0));
    // Unit transmitter = line current whose field is −(iωμ0/4)·H0^(2)(kr); as
    // a nodal density on cells of area h² its strength is −ω·μ0/h².
    rhs[grid.index(ix, iy)] = cplx(-omega * mu0 / (grid.pitch * grid.pitch), 0.0);
    return rhs;
}

FieldGrid incident_field(const Grid2D& grid, double omega, double txX, double txY) {
    FieldGrid f;
    f.grid = grid;
    f.values.resize(grid.cells());
    for (int iy = 0; iy < grid.ny; ++iy) {
        const double dy = grid.y(iy) - txY;
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double dx = grid.x(ix) - txX;
            f.values[grid.index(ix, iy)] =
                line_source_cell(omega, grid.pitch, std::hypot(dx, dy));
        }
    }
    return f;
}

}  // namespace emiv
