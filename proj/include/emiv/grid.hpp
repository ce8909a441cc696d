#pragma once

#include <cstdint>
#include <vector>

#include "emiv/constants.hpp"
#include "emiv/errors.hpp"

namespace emiv {

/// @brief Uniform 2-D raster. `origin` is the center of cell (0,0); cells are
/// squares of side `pitch`. Payloads indexed row-major with x fastest:
/// idx = iy*nx + ix.
struct Grid2D {
    int nx = 0;
    int ny = 0;
    double originX = 0.0;  ///< x of cell (0,0) center [m]
    double originY = 0.0;  ///< y of cell (0,0) center [m]
    double pitch = 0.0;    ///< cell side [m]

    int cells() const { return nx * ny; }
    int index(int ix, int iy) const { return iy * nx + ix; }
    double x(int ix) const { return originX + ix * pitch; }
    double y(int iy) const { return originY + iy * pitch; }
    double extentX() const { return (nx - 1) * pitch; }
    double extentY() const { return (ny - 1) * pitch; }

    bool sameRasterAs(const Grid2D& o) const {
        return nx == o.nx && ny == o.ny && pitch == o.pitch &&
               originX == o.originX && originY == o.originY;
    }
};

/// Complex field sampled on a grid.
struct FieldGrid {
    Grid2D grid;
    std::vector<cplx> values;  // grid.cells() entries
};

/// Real-valued map sampled on a grid.
struct RealGrid {
    Grid2D grid;
    std::vector<double> values;
};

/// @brief Material contrast against the homogeneous background:
/// dEps = eps_r - eps_r,bg and sigma [S/m], both on the same raster.
struct ContrastMap {
    Grid2D grid;
    std::vector<double> dEps;
    std::vector<double> sigma;

    /// Complex contrast at angular frequency w: dEps - i*sigma/(w*eps0).
    /// Purely real wherever sigma == 0.
    cplx chi(int cell, double omega) const {
        return cplx(dEps[cell], -sigma[cell] / (omega * eps0));
    }
};

inline void check_grid(const Grid2D& g, const char* what) {
    if (g.nx < 1 || g.ny < 1) fail_validation(std::string(what) + ": empty raster");
    if (!(g.pitch > 0.0)) fail_validation(std::string(what) + ": pitch must be positive");
}

}  // namespace emiv
