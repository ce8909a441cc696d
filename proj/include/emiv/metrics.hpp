#pragma once

/// @brief Reconstruction quality metrics and comparison tables.
///
/// Headline PSNR is computed on the relative-permittivity map; conductivity
/// accuracy is reported as a relative L2 error.  All CSV output uses a fixed
/// column order and 9-significant-digit decimal formatting.

#include <string>
#include <vector>

#include "emiv/grid.hpp"

namespace emiv {

/// 10·log10(MAX² / MSE) with MAX the peak of the ground-truth grid and MSE
/// the mean squared error over the raster.  Identical grids return +inf.
double psnr(const RealGrid& recon, const RealGrid& truth);

/// ‖a − b‖₂ / ‖b‖₂ (relative to the second argument); 0 when both are zero.
double rel_l2(const std::vector<double>& a, const std::vector<double>& b);
double rel_l2(const RealGrid& a, const RealGrid& b);

/// One inversion iteration for the history file.  The *Pre values are the
/// costs evaluated before the iteration's updates (used by the monotone
/// descent checks); psnrDb is NaN when no ground truth is available.
struct IterRecord {
    int iter = 0;
    double costJ = 0.0;
    double costChi = 0.0;
    double psnrDb = 0.0;
    double costJPre = 0.0;
    double costChiPre = 0.0;
};

/// CSV with header "iter,cost_j,cost_chi,psnr,cost_j_pre,cost_chi_pre".
std::string history_csv(const std::vector<IterRecord>& rows);

/// Final metrics of one reconstruction run.
struct EvalReport {
    std::string method;   // "static" | "rmc" | "opt-rmc" | ...
    std::string snrTag;   // "inf", "15", ...
    double psnrDb = 0.0;  // final-iterate PSNR of the permittivity map
    double relL2DEps = 0.0;
    double relL2Sigma = 0.0;
    std::vector<double> psnrCurve;  // optional per-iteration PSNR
};

/// CSV table "method,snr,psnr_final_db,psnr_best_db,rel_l2_deps,rel_l2_sigma"
/// with rows sorted by (method, snr); best PSNR falls back to the final value
/// when no curve is attached.
std::string compare_methods(const std::vector<EvalReport>& reports);

}  // namespace emiv
