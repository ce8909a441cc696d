#include "emiv/scene.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "emiv/storage.hpp"

namespace emiv {

namespace {

bool ascending_positive(const std::vector<double>& v) {
    if (v.empty()) return false;
    if (v.front() <= 0.0) return false;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] <= v[i - 1]) return false;
    return true;
}

/// Cell-edge bounding box of a raster.
void raster_box(const Grid2D& g, double& x0, double& y0, double& x1, double& y1) {
    x0 = g.originX - 0.5 * g.pitch;
    y0 = g.originY - 0.5 * g.pitch;
    x1 = g.originX + (g.nx - 0.5) * g.pitch;
    y1 = g.originY + (g.ny - 0.5) * g.pitch;
}

bool inside_box(const Vec2& p, const Grid2D& g) {
    double x0, y0, x1, y1;
    raster_box(g, x0, y0, x1, y1);
    return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
}

nlohmann::json grid_to_json(const Grid2D& g) {
    nlohmann::json j;
    j["nx"] = g.nx;
    j["ny"] = g.ny;
    j["origin_x"] = g.originX;
    j["origin_y"] = g.originY;
    j["pitch"] = g.pitch;
    return j;
}

Grid2D grid_from_json(const nlohmann::json& j) {
    Grid2D g;
    g.nx = j.at("nx").get<int>();
    g.ny = j.at("ny").get<int>();
    g.originX = j.at("origin_x").get<double>();
    g.originY = j.at("origin_y").get<double>();
    g.pitch = j.at("pitch").get<double>();
    return g;
}

}  // namespace

std::vector<double> FrequencyPlan::unionList() const {
    std::vector<double> u = bp;
    u.insert(u.end(), inversion.begin(), inversion.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end(),
                        [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(a, b); }),
            u.end());
    return u;
}

SceneConfig make_tridisc_scene() {
    SceneConfig s;
    s.name = "tridisc";
    s.bgEpsR = 1.0;
    s.bgSigma = 0.0;

    // Three lossless eps_r = 3 discs on an equilateral triangle, one vertex up.
    const double circum = 0.12;
    for (double angleDeg : {90.0, 210.0, 330.0}) {
        Disc d;
        d.cx = circum * std::cos(angleDeg * pi / 180.0);
        d.cy = circum * std::sin(angleDeg * pi / 180.0);
        d.radius = 0.06;
        d.dEps = 2.0;
        d.sigma = 0.0;
        s.discs.push_back(d);
    }

    // Diagonal 7-cycle track, upper-left to lower-right; cycle 4 is the origin.
    for (int m = 0; m < 7; ++m) {
        s.trajectory.x.push_back(-0.6 + 0.2 * m);
        s.trajectory.y.push_back(0.3 - 0.1 * m);
    }
    s.trajectory.refCycle = 3;

    // Full ring, radius 2.45 m: stand-off from the reconstruction domain
    // exceeds two wavelengths at the lowest inversion frequency. Rx angles are
    // interleaved so no element coincides with a Tx.
    const double ringRadius = 2.45;
    for (int p = 0; p < 7; ++p) {
        double a = 2.0 * pi * p / 7.0;
        s.arrays.tx.push_back({ringRadius * std::cos(a), ringRadius * std::sin(a)});
    }
    for (int q = 0; q < 15; ++q) {
        double a = (12.0 + 24.0 * q) * pi / 180.0;
        s.arrays.rx.push_back({ringRadius * std::cos(a), ringRadius * std::sin(a)});
    }

    for (int i = 0; i < 19; ++i) s.freqs.bp.push_back(1.0e6 * (100 + 50 * i));
    for (int i = 0; i < 8; ++i) s.freqs.inversion.push_back(1.0e6 * (300 + 100 * i));

    // Reconstruction raster: 64x64 cells of 0.01 m centered on the reference
    // position; cell edges span [-0.32, 0.32] in both axes.
    s.inversionDomain.nx = 64;
    s.inversionDomain.ny = 64;
    s.inversionDomain.pitch = 0.01;
    s.inversionDomain.originX = -0.315;
    s.inversionDomain.originY = -0.315;

    // Full-domain raster: covers the ring and every target position.
    s.grid.nx = 521;
    s.grid.ny = 521;
    s.grid.pitch = 0.01;
    s.grid.originX = -2.6;
    s.grid.originY = -2.6;
    return s;
}

std::vector<std::string> validate_scene(const SceneConfig& s) {
    std::vector<std::string> v;
    auto bad = [&v](const std::string& msg) { v.push_back(msg); };

    if (s.grid.nx < 8 || s.grid.ny < 8) bad("grid: raster must be at least 8x8 cells");
    if (!(s.grid.pitch > 0.0)) bad("grid: pitch must be positive");
    if (s.inversionDomain.nx < 8 || s.inversionDomain.ny < 8)
        bad("inversion_domain: raster must be at least 8x8 cells");
    if (!(s.inversionDomain.pitch > 0.0)) bad("inversion_domain: pitch must be positive");

    if (!(s.bgEpsR > 0.0)) bad("background: eps_r must be positive");
    if (s.bgSigma < 0.0) bad("background: sigma must be non-negative");

    if (s.discs.empty()) bad("target: no discs");
    double maxEps = s.bgEpsR;
    double templateRadius = 0.0;
    for (std::size_t i = 0; i < s.discs.size(); ++i) {
        const Disc& d = s.discs[i];
        std::string tag = "target disc " + std::to_string(i + 1);
        if (!(d.radius > 0.0)) bad(tag + ": radius must be positive");
        if (d.dEps + s.bgEpsR <= 0.0) bad(tag + ": eps_r must stay positive");
        if (d.sigma < 0.0) bad(tag + ": sigma must be non-negative");
        maxEps = std::max(maxEps, s.bgEpsR + d.dEps);
        templateRadius = std::max(templateRadius, std::hypot(d.cx, d.cy) + d.radius);
    }

    if (s.arrays.tx.empty()) bad("arrays: no transmitters");
    if (s.arrays.rx.empty()) bad("arrays: no receivers");
    for (std::size_t p = 0; p < s.arrays.tx.size(); ++p)
        if (inside_box(s.arrays.tx[p], s.inversionDomain))
            bad("arrays: tx " + std::to_string(p + 1) + " lies inside the inversion domain");
    for (std::size_t q = 0; q < s.arrays.rx.size(); ++q)
        if (inside_box(s.arrays.rx[q], s.inversionDomain))
            bad("arrays: rx " + std::to_string(q + 1) + " lies inside the inversion domain");
    for (const auto& p : s.arrays.tx)
        if (!inside_box(p, s.grid)) bad("arrays: tx position outside the full grid");
    for (const auto& q : s.arrays.rx)
        if (!inside_box(q, s.grid)) bad("arrays: rx position outside the full grid");

    if (s.trajectory.x.size() != s.trajectory.y.size())
        bad("trajectory: x and y lists differ in length");
    if (s.trajectory.x.empty()) bad("trajectory: empty");
    if (s.trajectory.refCycle < 0 || s.trajectory.refCycle >= s.trajectory.cycles())
        bad("trajectory: reference cycle out of range");
    for (int m = 0; m < s.trajectory.cycles(); ++m) {
        Vec2 c{s.trajectory.x[m], s.trajectory.y[m]};
        double x0, y0, x1, y1;
        raster_box(s.grid, x0, y0, x1, y1);
        if (c.x - templateRadius < x0 || c.x + templateRadius > x1 ||
            c.y - templateRadius < y0 || c.y + templateRadius > y1)
            bad("trajectory: target at cycle " + std::to_string(m + 1) +
                " extends beyond the full grid");
    }

    if (!ascending_positive(s.freqs.bp)) bad("frequencies: bp list must be ascending and positive");
    if (!ascending_positive(s.freqs.inversion))
        bad("frequencies: inversion list must be ascending and positive");

    // Dispersion rule: pitch within lambda_min/15 at the highest inversion
    // frequency inside the densest material.
    if (!s.freqs.inversion.empty() && s.inversionDomain.pitch > 0.0) {
        double fmax = s.freqs.inversion.back();
        double lambdaMin = c0 / (fmax * std::sqrt(maxEps));
        if (s.inversionDomain.pitch > lambdaMin / 15.0 + 1e-15)
            bad("inversion_domain: pitch exceeds lambda_min/15 at the highest inversion frequency");
    }

    // Inversion raster must sit inside the full domain.
    {
        double ax0, ay0, ax1, ay1, bx0, by0, bx1, by1;
        raster_box(s.inversionDomain, ax0, ay0, ax1, ay1);
        raster_box(s.grid, bx0, by0, bx1, by1);
        if (ax0 < bx0 || ay0 < by0 || ax1 > bx1 || ay1 > by1)
            bad("inversion_domain: raster extends beyond the full grid");
    }

    // Template must fit the reconstruction raster at the reference position.
    {
        double ax0, ay0, ax1, ay1;
        raster_box(s.inversionDomain, ax0, ay0, ax1, ay1);
        if (-templateRadius < ax0 || templateRadius > ax1 ||
            -templateRadius < ay0 || templateRadius > ay1)
            bad("inversion_domain: target template does not fit the raster");
    }
    return v;
}

void require_valid_scene(const SceneConfig& s) {
    auto v = validate_scene(s);
    if (v.empty()) return;
    std::string msg = "scene validation failed:";
    for (const auto& m : v) msg += "\n  - " + m;
    fail_validation(msg);
}

std::string serialize_scene(const SceneConfig& s) {
    nlohmann::json j;
    j["schema"] = "emiv-scene/1";
    j["name"] = s.name;
    j["background"]["eps_r"] = s.bgEpsR;
    j["background"]["sigma"] = s.bgSigma;
    j["grid"] = grid_to_json(s.grid);
    j["inversion_domain"] = grid_to_json(s.inversionDomain);
    nlohmann::json discs = nlohmann::json::array();
    for (const auto& d : s.discs) {
        nlohmann::json e;
        e["center_x"] = d.cx;
        e["center_y"] = d.cy;
        e["radius"] = d.radius;
        e["d_eps"] = d.dEps;
        e["sigma"] = d.sigma;
        discs.push_back(e);
    }
    j["target_discs"] = discs;
    nlohmann::json tx = nlohmann::json::array(), rx = nlohmann::json::array();
    for (const auto& p : s.arrays.tx) tx.push_back({p.x, p.y});
    for (const auto& q : s.arrays.rx) rx.push_back({q.x, q.y});
    j["tx"] = tx;
    j["rx"] = rx;
    j["trajectory"]["x"] = s.trajectory.x;
    j["trajectory"]["y"] = s.trajectory.y;
    j["trajectory"]["reference_cycle"] = s.trajectory.refCycle + 1;  // 1-based on disk
    j["frequencies_hz"]["bp"] = s.freqs.bp;
    j["frequencies_hz"]["inversion"] = s.freqs.inversion;
    return j.dump(2) + "\n";
}

SceneConfig parse_scene(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail_io("scene: malformed JSON");
    if (j.value("schema", "") != "emiv-scene/1") fail_io("scene: wrong or missing schema");
    SceneConfig s;
    try {
        s.name = j.value("name", "");
        s.bgEpsR = j.at("background").at("eps_r").get<double>();
        s.bgSigma = j.at("background").at("sigma").get<double>();
        s.grid = grid_from_json(j.at("grid"));
        s.inversionDomain = grid_from_json(j.at("inversion_domain"));
        for (const auto& e : j.at("target_discs")) {
            Disc d;
            d.cx = e.at("center_x").get<double>();
            d.cy = e.at("center_y").get<double>();
            d.radius = e.at("radius").get<double>();
            d.dEps = e.at("d_eps").get<double>();
            d.sigma = e.at("sigma").get<double>();
            s.discs.push_back(d);
        }
        for (const auto& e : j.at("tx")) s.arrays.tx.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
        for (const auto& e : j.at("rx")) s.arrays.rx.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
        s.trajectory.x = j.at("trajectory").at("x").get<std::vector<double>>();
        s.trajectory.y = j.at("trajectory").at("y").get<std::vector<double>>();
        s.trajectory.refCycle = j.at("trajectory").at("reference_cycle").get<int>() - 1;
        s.freqs.bp = j.at("frequencies_hz").at("bp").get<std::vector<double>>();
        s.freqs.inversion = j.at("frequencies_hz").at("inversion").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        fail_io(std::string("scene: ") + e.what());
    }
    return s;
}

SceneConfig load_scene(const std::string& path) { return parse_scene(read_text_file(path)); }

void save_scene(const std::string& path, const SceneConfig& s) {
    write_text_file(path, serialize_scene(s));
}

std::string scene_hash(const SceneConfig& s) { return sha256_hex(serialize_scene(s)); }

ContrastMap rasterize_target(const SceneConfig& s, const Grid2D& raster,
                             double centerX, double centerY) {
    check_grid(raster, "rasterize_target");
    ContrastMap map;
    map.grid = raster;
    map.dEps.assign(raster.cells(), 0.0);
    map.sigma.assign(raster.cells(), 0.0);
    constexpr int ns = 32;  // subcell coverage samples per axis
    const double sub = raster.pitch / ns;
    for (const Disc& d : s.discs) {
        double cx = centerX + d.cx;
        double cy = centerY + d.cy;
        double r2 = d.radius * d.radius;
        // Cells possibly touched by this disc.
        int ix0 = std::max(0, static_cast<int>(std::floor((cx - d.radius - raster.originX) / raster.pitch)) - 1);
        int ix1 = std::min(raster.nx - 1, static_cast<int>(std::ceil((cx + d.radius - raster.originX) / raster.pitch)) + 1);
        int iy0 = std::max(0, static_cast<int>(std::floor((cy - d.radius - raster.originY) / raster.pitch)) - 1);
        int iy1 = std::min(raster.ny - 1, static_cast<int>(std::ceil((cy + d.radius - raster.originY) / raster.pitch)) + 1);
        for (int iy = iy0; iy <= iy1; ++iy) {
            for (int ix = ix0; ix <= ix1; ++ix) {
                double x0 = raster.x(ix) - 0.5 * raster.pitch + 0.5 * sub;
                double y0 = raster.y(iy) - 0.5 * raster.pitch + 0.5 * sub;
                int hit = 0;
                for (int sy = 0; sy < ns; ++sy) {
                    double dy = y0 + sy * sub - cy;
                    for (int sx = 0; sx < ns; ++sx) {
                        double dx = x0 + sx * sub - cx;
                        if (dx * dx + dy * dy <= r2) ++hit;
                    }
                }
                if (hit == 0) continue;
                double frac = static_cast<double>(hit) / (ns * ns);
                int c = raster.index(ix, iy);
                map.dEps[c] += d.dEps * frac;
                map.sigma[c] += d.sigma * frac;
            }
        }
    }
    return map;
}

ShiftSet true_shifts(const SceneConfig& s) {
    ShiftSet ss;
    ss.refCycle = s.trajectory.refCycle;
    for (int m = 0; m < s.trajectory.cycles(); ++m) {
        Vec2 d = s.trajectory.displacement(m);
        ss.shifts.push_back({d.x, d.y, 1.0});
    }
    return ss;
}

}  // namespace emiv
