// Pipeline driver: simulate -> bp -> register -> invert -> eval.  Stages
// communicate through files only; every stage writes a manifest chaining the
// input hashes so any result is traceable back to the raw scene document.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "emiv/bp.hpp"
#include "emiv/errors.hpp"
#include "emiv/forward.hpp"
#include "emiv/inversion.hpp"
#include "emiv/metrics.hpp"
#include "emiv/registration.hpp"
#include "emiv/scene.hpp"
#include "emiv/storage.hpp"

namespace fs = std::filesystem;
using namespace emiv;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string timestamp_or_empty() {
    const char* opt = std::getenv("EMIV_TIMESTAMPS");
    if (opt == nullptr || std::string(opt) != "1") return "";
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

double parse_snr(const std::string& s) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "inf" || t == "+inf" || t == "infinity")
        return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        fail_validation("--snr: expected a decibel value or 'inf', got '" + s + "'");
    }
    if (used != t.size()) fail_validation("--snr: trailing characters in '" + s + "'");
    if (std::isnan(v)) fail_validation("--snr: NaN is not a valid level");
    return v;
}

std::string snr_tag(double snrDb) {
    return std::isinf(snrDb) ? std::string("inf") : format_sig9(snrDb);
}

void make_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) fail_io(out + ": cannot create output directory (" + ec.message() + ")");
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

/// Raster covering [x0,x1]x[y0,y1]: cell count rounded to the box span, cell
/// centers symmetric about the box midpoint.
Grid2D grid_from_box(double x0, double y0, double x1, double y1, double pitch) {
    if (!(pitch > 0.0)) fail_validation("domain: pitch must be positive");
    if (!(x1 > x0) || !(y1 > y0)) fail_validation("domain: box corners out of order");
    Grid2D g;
    g.pitch = pitch;
    g.nx = std::max(1, static_cast<int>(std::lround((x1 - x0) / pitch)));
    g.ny = std::max(1, static_cast<int>(std::lround((y1 - y0) / pitch)));
    g.originX = 0.5 * (x0 + x1) - 0.5 * (g.nx - 1) * pitch;
    g.originY = 0.5 * (y0 + y1) - 0.5 * (g.ny - 1) * pitch;
    return g;
}

std::string bp_image_name(int cycle1Based) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "bp_cycle%02d.grid", cycle1Based);
    return buf;
}

/// Measurement file plus the scene sidecar stored next to it by `simulate`.
struct LoadedRun {
    MeasurementSet meas;
    SceneConfig scene;
    std::string measPath;
    std::string scenePath;
};

LoadedRun load_run(const std::string& dataArg) {
    LoadedRun run;
    fs::path p(dataArg);
    std::error_code ec;
    if (fs::is_directory(p, ec)) p /= "meas.bin";
    run.measPath = p.string();
    run.scenePath = (p.parent_path() / "scene.json").string();
    run.meas = read_measurements(run.measPath);
    run.scene = load_scene(run.scenePath);
    if (scene_hash(run.scene) != run.meas.sceneHash)
        fail_validation(run.scenePath + ": scene does not match the measurement scene hash");
    return run;
}


std::vector<double> psnr_curve_from_history(const std::string& path) {
    std::vector<double> curve;
    if (!fs::exists(path)) return curve;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        // iter,cost_j,cost_chi,psnr,...
        std::size_t pos = 0;
        int col = 0;
        while (col < 3 && pos != std::string::npos) {
            pos = line.find(',', pos);
            if (pos != std::string::npos) ++pos;
            ++col;
        }
        if (pos == std::string::npos) continue;
        const double v = std::strtod(line.c_str() + pos, nullptr);
        if (std::isfinite(v)) curve.push_back(v);
    }
    return curve;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& scenePath, const std::string& snrStr, std::uint64_t seed,
                 const std::string& out, bool crime) {
    const SceneConfig scene = load_scene(scenePath);
    const double snrDb = parse_snr(snrStr);

    MeasurementSet meas = crime ? crime_measurements(scene) : synth_measurements(scene);
    if (!std::isinf(snrDb)) meas = add_noise(meas, snrDb, seed);

    make_out_dir(out);
    save_scene(join(out, "scene.json"), scene);
    write_measurements(join(out, "meas.bin"), meas);

    RunManifest m;
    m.tool = "simulate";
    m.toolVersion = kToolVersion;
    m.configHash = scene_hash(scene);
    m.inputHashes["scene"] = hash_artifact(scenePath);
    m.inputHashes["meas.bin"] = hash_artifact(join(out, "meas.bin"));
    m.flags["snr"] = snr_tag(snrDb);
    m.flags["crime"] = crime ? "true" : "false";
    m.seed = seed;
    m.timestamp = timestamp_or_empty();
    write_manifest(join(out, "manifest.json"), m);
    return 0;
}

int cmd_bp(const std::string& dataArg, const std::vector<double>& rasterBox,
           const std::string& out) {
    const LoadedRun run = load_run(dataArg);
    Grid2D raster = default_bp_raster();
    if (!rasterBox.empty()) {
        if (rasterBox.size() != 5)
            fail_validation("--raster: expected x0 y0 x1 y1 pitch");
        raster = grid_from_box(rasterBox[0], rasterBox[1], rasterBox[2], rasterBox[3],
                               rasterBox[4]);
    }

    const std::vector<BpImage> images = bp_all_cycles(run.meas, run.scene, raster);
    make_out_dir(out);
    for (const BpImage& img : images) {
        const std::string name = bp_image_name(img.cycle + 1);
        write_bp_image(join(out, name), img);
        std::string pgm = name;
        pgm.replace(pgm.size() - 5, 5, ".pgm");
        write_pgm_complex(join(out, pgm), img.raster, img.values);
    }

    RunManifest m;
    m.tool = "bp";
    m.toolVersion = kToolVersion;
    m.configHash = run.meas.sceneHash;
    m.inputHashes["meas.bin"] = hash_artifact(run.measPath);
    for (const BpImage& img : images) {
        const std::string name = bp_image_name(img.cycle + 1);
        m.inputHashes[name] = hash_artifact(join(out, name));
    }
    m.flags["cycles"] = std::to_string(images.size());
    m.timestamp = timestamp_or_empty();
    write_manifest(join(out, "manifest.json"), m);
    return 0;
}

int cmd_register(const std::string& bpDir, int ref1, const std::string& out) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(bpDir, ec)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("bp_cycle", 0) == 0 && name.size() > 5 &&
            name.compare(name.size() - 5, 5, ".grid") == 0)
            files.push_back(e.path().string());
    }
    if (ec) fail_io(bpDir + ": cannot list directory (" + ec.message() + ")");
    if (files.empty()) fail_io(bpDir + ": no bp_cycle*.grid snapshots found");
    std::sort(files.begin(), files.end());

    std::vector<BpImage> images;
    images.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        images.push_back(read_bp_image(files[i]));
        images.back().cycle = static_cast<int>(i);
    }

    if (ref1 < 1 || ref1 > static_cast<int>(images.size()))
        fail_validation("--ref: cycle " + std::to_string(ref1) + " of " +
                        std::to_string(images.size()) + " is out of range");
    const ShiftSet shifts = estimate_trajectory(images, ref1 - 1);
    for (std::size_t i = 0; i < shifts.shifts.size(); ++i)
        if (static_cast<int>(i) != shifts.refCycle && shifts.shifts[i].quality < 0.03)
            warn("register: cycle " + std::to_string(i + 1) + " correlation quality " +
                 format_sig9(shifts.shifts[i].quality) + " is weak");

    make_out_dir(out);
    write_shifts(join(out, "shifts.json"), shifts);

    RunManifest m;
    m.tool = "register";
    m.toolVersion = kToolVersion;
    for (const std::string& f : files)
        m.inputHashes[fs::path(f).filename().string()] = hash_artifact(f);
    m.flags["ref"] = std::to_string(ref1);
    m.timestamp = timestamp_or_empty();
    write_manifest(join(out, "manifest.json"), m);
    return 0;
}

int cmd_invert(const std::string& method, const std::string& dataArg,
               const std::string& shiftsPath, const std::string& truthPath, int iters,
               const std::string& out, const std::vector<double>& domainBox,
               const std::string& bpDir, bool clamp) {
    const LoadedRun run = load_run(dataArg);

    // Per-cycle compensation shifts, by method.
    ShiftSet shifts;
    SceneConfig truthScene;
    bool haveTruth = false;
    if (!truthPath.empty()) {
        truthScene = load_scene(truthPath);
        haveTruth = true;
    }
    if (method == "static") {
        if (!shiftsPath.empty()) warn("invert: --method static ignores --shifts");
        shifts.refCycle = run.scene.trajectory.refCycle;
        shifts.shifts.assign(static_cast<std::size_t>(run.meas.cycles), ShiftEstimate{0.0, 0.0, 1.0});
    } else if (method == "rmc") {
        if (shiftsPath.empty()) fail_validation("invert: --method rmc requires --shifts");
        shifts = read_shifts(shiftsPath);
    } else if (method == "opt-rmc") {
        if (!haveTruth) fail_validation("invert: --method opt-rmc requires --truth");
        shifts = true_shifts(truthScene);
    } else {
        fail_validation("invert: unknown method '" + method + "'");
    }
    if (static_cast<int>(shifts.shifts.size()) != run.meas.cycles)
        fail_validation("invert: shift count does not match the measurement cycles");

    // Reconstruction raster: explicit box > reference snapshot blob > scene default.
    Grid2D domain = run.scene.inversionDomain;
    if (!domainBox.empty()) {
        if (domainBox.size() != 4) fail_validation("--domain: expected x0 y0 x1 y1");
        domain = grid_from_box(domainBox[0], domainBox[1], domainBox[2], domainBox[3],
                               run.scene.inversionDomain.pitch);
    } else if (!bpDir.empty()) {
        const std::string refImg = join(bpDir, bp_image_name(shifts.refCycle + 1));
        const std::array<double, 4> box = bp_blob_box(read_bp_image(refImg));
        domain = grid_from_box(box[0], box[1], box[2], box[3], run.scene.inversionDomain.pitch);
    }

    const InversionOperators ops = build_inversion_operators(
        run.scene.arrays, shifts, run.scene.freqs.inversion, domain);
    const std::vector<Eigen::MatrixXcd> data = select_data(run.meas, run.scene.freqs.inversion);

    InversionConfig cfg;
    cfg.maxIters = iters;
    cfg.clamp = clamp;
    cfg.bgEpsR = run.scene.bgEpsR;
    if (haveTruth) {
        const int ref = truthScene.trajectory.refCycle;
        const ContrastMap truth = rasterize_target(
            truthScene, domain, truthScene.trajectory.x[static_cast<std::size_t>(ref)],
            truthScene.trajectory.y[static_cast<std::size_t>(ref)]);
        RealGrid teps;
        teps.grid = domain;
        teps.values.resize(static_cast<std::size_t>(domain.cells()));
        for (int n = 0; n < domain.cells(); ++n)
            teps.values[static_cast<std::size_t>(n)] =
                truthScene.bgEpsR + truth.dEps[static_cast<std::size_t>(n)];
        cfg.truthEpsR = std::move(teps);
    }

    const InversionResult res = run_inversion(ops, data, cfg);

    make_out_dir(out);
    write_grid_real(join(out, "eps_r.grid"), domain, res.epsR.values);
    write_grid_real(join(out, "sigma.grid"), domain, res.sigma.values);
    write_pgm(join(out, "eps_r.pgm"), domain, res.epsR.values);
    write_pgm(join(out, "sigma.pgm"), domain, res.sigma.values);
    write_text_file(join(out, "history.csv"), history_csv(res.history));

    RunManifest m;
    m.tool = "invert";
    m.toolVersion = kToolVersion;
    m.configHash = run.meas.sceneHash;
    m.inputHashes["meas.bin"] = hash_artifact(run.measPath);
    if (method == "rmc") m.inputHashes["shifts"] = hash_artifact(shiftsPath);
    if (haveTruth) m.inputHashes["truth"] = hash_artifact(truthPath);
    m.flags["method"] = method;
    m.flags["snr"] = snr_tag(run.meas.snrDb);
    m.flags["iters"] = std::to_string(iters);
    m.flags["clamp"] = clamp ? "true" : "false";
    m.flags["diverged"] = res.diverged ? "true" : "false";
    m.flags["domain"] = format_sig9(domain.originX) + " " + format_sig9(domain.originY) + " " +
                        std::to_string(domain.nx) + "x" + std::to_string(domain.ny) + " @ " +
                        format_sig9(domain.pitch);
    m.seed = run.meas.seed;
    m.timestamp = timestamp_or_empty();
    write_manifest(join(out, "manifest.json"), m);

    if (res.diverged) {
        warn("invert: cost diverged; reconstruction written up to the stop iteration");
        return 3;
    }
    return 0;
}

int cmd_eval(const std::vector<std::string>& reconDirs, const std::string& truthPath,
             const std::string& out) {
    const SceneConfig truthScene = load_scene(truthPath);
    const int ref = truthScene.trajectory.refCycle;

    std::vector<EvalReport> reports;
    RunManifest m;
    for (const std::string& dir : reconDirs) {
        const RunManifest rm = read_manifest(join(dir, "manifest.json"));
        const GridFile eps = read_grid(join(dir, "eps_r.grid"));
        const GridFile sig = read_grid(join(dir, "sigma.grid"));
        if (eps.isComplex || sig.isComplex)
            fail_validation(dir + ": parameter maps must be real grids");
        if (!eps.grid.sameRasterAs(sig.grid))
            fail_validation(dir + ": eps_r and sigma rasters disagree");

        const ContrastMap truth = rasterize_target(
            truthScene, eps.grid, truthScene.trajectory.x[static_cast<std::size_t>(ref)],
            truthScene.trajectory.y[static_cast<std::size_t>(ref)]);
        RealGrid truthEps;
        truthEps.grid = eps.grid;
        truthEps.values.resize(truth.dEps.size());
        for (std::size_t n = 0; n < truth.dEps.size(); ++n)
            truthEps.values[n] = truthScene.bgEpsR + truth.dEps[n];

        RealGrid reconEps;
        reconEps.grid = eps.grid;
        reconEps.values = eps.realValues;

        EvalReport r;
        auto it = rm.flags.find("method");
        r.method = it == rm.flags.end() ? fs::path(dir).filename().string() : it->second;
        it = rm.flags.find("snr");
        r.snrTag = it == rm.flags.end() ? "unknown" : it->second;
        r.psnrDb = psnr(reconEps, truthEps);

        std::vector<double> reconDEps(eps.realValues.size());
        for (std::size_t n = 0; n < reconDEps.size(); ++n)
            reconDEps[n] = eps.realValues[n] - truthScene.bgEpsR;
        r.relL2DEps = rel_l2(reconDEps, truth.dEps);

        // Lossless truths have a zero sigma map; fall back to the RMS of the
        // reconstructed conductivity [S/m] so the column stays informative.
        double truthSigNorm = 0.0;
        for (double v : truth.sigma) truthSigNorm += v * v;
        if (truthSigNorm > 0.0) {
            r.relL2Sigma = rel_l2(sig.realValues, truth.sigma);
        } else {
            double acc = 0.0;
            for (double v : sig.realValues) acc += v * v;
            r.relL2Sigma = std::sqrt(acc / static_cast<double>(sig.realValues.size()));
        }
        r.psnrCurve = psnr_curve_from_history(join(dir, "history.csv"));
        m.inputHashes[r.method + ":" + r.snrTag] = hash_artifact(join(dir, "eps_r.grid"));
        reports.push_back(std::move(r));
    }

    make_out_dir(out);
    write_text_file(join(out, "report.csv"), compare_methods(reports));

    m.tool = "eval";
    m.toolVersion = kToolVersion;
    m.configHash = scene_hash(truthScene);
    m.inputHashes["truth"] = hash_artifact(truthPath);
    m.flags["psnr_operand"] = "eps_r map; MAX = max of the truth eps_r grid";
    m.flags["sigma_metric"] = "relative L2; RMS [S/m] when the truth sigma map is zero";
    m.timestamp = timestamp_or_empty();
    write_manifest(join(out, "manifest.json"), m);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-cycle MIMO scattered-field synthesis, imaging and inversion"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Synthesize a multi-cycle measurement set");
    std::string simScene, simSnr = "inf", simOut;
    std::uint64_t simSeed = 0;
    bool simCrime = false;
    sim->add_option("--scene", simScene, "Scene document (JSON)")->required();
    sim->add_option("--snr", simSnr, "SNR in dB, or 'inf' for noiseless");
    sim->add_option("--seed", simSeed, "Noise seed");
    sim->add_option("--out", simOut, "Output directory")->required();
    sim->add_flag("--crime", simCrime, "Generate through the inversion operators");

    // bp
    auto* bp = app.add_subcommand("bp", "Back-project snapshots, one per cycle");
    std::string bpData, bpOut;
    std::vector<double> bpRaster;
    bp->add_option("--data", bpData, "Measurement file or simulate output directory")->required();
    bp->add_option("--raster", bpRaster, "Snapshot raster: x0 y0 x1 y1 pitch")->expected(5);
    bp->add_option("--out", bpOut, "Output directory")->required();

    // register
    auto* reg = app.add_subcommand("register", "Estimate per-cycle shifts from snapshots");
    std::string regBp, regOut;
    int regRef = 0;
    reg->add_option("--bp", regBp, "Directory of bp_cycle*.grid snapshots")->required();
    reg->add_option("--ref", regRef, "Reference cycle (1-based)")->required();
    reg->add_option("--out", regOut, "Output directory")->required();

    // invert
    auto* inv = app.add_subcommand("invert", "Reconstruct permittivity and conductivity");
    std::string invMethod, invData, invShifts, invTruth, invOut, invBp;
    int invIters = 512;
    bool invClamp = false;
    std::vector<double> invDomain;
    inv->add_option("--method", invMethod, "static | rmc | opt-rmc")->required();
    inv->add_option("--data", invData, "Measurement file or simulate output directory")->required();
    inv->add_option("--shifts", invShifts, "Shift document (rmc)");
    inv->add_option("--truth", invTruth, "Truth scene (opt-rmc shifts; per-iteration PSNR)");
    inv->add_option("--iters", invIters, "Iteration budget (0 = initialization only)");
    inv->add_option("--domain", invDomain, "Reconstruction box: x0 y0 x1 y1")->expected(4);
    inv->add_option("--bp", invBp, "Snapshot directory; reference blob proposes the domain");
    inv->add_flag("--clamp", invClamp, "Clamp deps >= 0 and sigma >= 0 after each update");
    inv->add_option("--out", invOut, "Output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Score reconstructions against a truth scene");
    std::vector<std::string> evRecon;
    std::string evTruth, evOut;
    ev->add_option("--recon", evRecon, "Reconstruction directories (repeatable)")->required();
    ev->add_option("--truth", evTruth, "Truth scene (JSON)")->required();
    ev->add_option("--out", evOut, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(simScene, simSnr, simSeed, simOut, simCrime);
        if (bp->parsed()) return cmd_bp(bpData, bpRaster, bpOut);
        if (reg->parsed()) return cmd_register(regBp, regRef, regOut);
        if (inv->parsed())
            return cmd_invert(invMethod, invData, invShifts, invTruth, invIters, invOut,
                              invDomain, invBp, invClamp);
        if (ev->parsed()) return cmd_eval(evRecon, evTruth, evOut);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.kind()) {
            case ErrorKind::validation: return 2;
            case ErrorKind::numerical: return 3;
            case ErrorKind::io: return 4;
        }
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
