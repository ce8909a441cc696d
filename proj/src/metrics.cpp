#include "emiv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "emiv/errors.hpp"
#include "emiv/storage.hpp"

namespace emiv {

double psnr(const RealGrid& recon, const RealGrid& truth) {
    check_grid(truth.grid, "psnr");
    if (!recon.grid.sameRasterAs(truth.grid))
        fail_validation("psnr: reconstruction and truth use different rasters");
    const std::size_t n = truth.values.size();
    if (recon.values.size() != n || n != static_cast<std::size_t>(truth.grid.cells()))
        fail_validation("psnr: grid payload size mismatch");

    double peak = truth.values[0];
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        peak = std::max(peak, truth.values[i]);
        const double d = recon.values[i] - truth.values[i];
        sq += d * d;
    }
    if (sq == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sq / static_cast<double>(n);
    return 10.0 * std::log10(peak * peak / mse);
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail_validation("rel_l2: length mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    if (num == 0.0) return 0.0;
    if (den == 0.0) fail_validation("rel_l2: reference is identically zero");
    return std::sqrt(num / den);
}

double rel_l2(const RealGrid& a, const RealGrid& b) {
    if (!a.grid.sameRasterAs(b.grid)) fail_validation("rel_l2: raster mismatch");
    return rel_l2(a.values, b.values);
}

std::string history_csv(const std::vector<IterRecord>& rows) {
    std::ostringstream out;
    out << "iter,cost_j,cost_chi,psnr,cost_j_pre,cost_chi_pre\n";
    for (const IterRecord& r : rows) {
        out << r.iter << ',' << format_sig9(r.costJ) << ',' << format_sig9(r.costChi) << ','
            << format_sig9(r.psnrDb) << ',' << format_sig9(r.costJPre) << ','
            << format_sig9(r.costChiPre) << '\n';
    }
    return out.str();
}

std::string compare_methods(const std::vector<EvalReport>& reports) {
    if (reports.empty()) fail_validation("compare_methods: no reports");
    std::vector<EvalReport> sorted = reports;
    std::sort(sorted.begin(), sorted.end(), [](const EvalReport& a, const EvalReport& b) {
        if (a.method != b.method) return a.method < b.method;
        return a.snrTag < b.snrTag;
    });
    std::ostringstream out;
    out << "method,snr,psnr_final_db,psnr_best_db,rel_l2_deps,rel_l2_sigma\n";
    for (const EvalReport& r : sorted) {
        double best = r.psnrDb;
        for (double v : r.psnrCurve) best = std::max(best, v);
        out << r.method << ',' << r.snrTag << ',' << format_sig9(r.psnrDb) << ','
            << format_sig9(best) << ',' << format_sig9(r.relL2DEps) << ','
            << format_sig9(r.relL2Sigma) << '\n';
    }
    return out.str();
}

}  // namespace emiv
