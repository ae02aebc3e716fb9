// atrt: multi-bang SPECT joint reconstruction and AtRT singularity lab.
//
// Subcommands: phantom, forward, recon, singscan, verify.
// Exit codes: 0 success, 2 usage, 3 validation, 4 solver failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "atrt/atrt.hpp"

namespace fs = std::filesystem;
using namespace atrt;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ManifestWriter {
    std::map<std::string, std::map<std::string, std::string>> sections;

    void put(const std::string& section, const std::string& key, const std::string& value) {
        sections[section][key] = value;
    }
    void put(const std::string& section, const std::string& key, double value) {
        put(section, key, io::fmt(value));
    }
    void put(const std::string& section, const std::string& key, std::uint64_t value) {
        put(section, key, std::to_string(value));
    }
    void put(const std::string& section, const std::string& key, int value) {
        put(section, key, std::to_string(value));
    }

    void write(const std::string& path) const {
        std::string out;
        for (const auto& [sec, kv] : sections) {
            out += "[" + sec + "]\n";
            for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
            out += "\n";
        }
        io::write_text(path, out);
    }
};

Vec parse_levels(const std::string& text) {
    Vec out;
    std::string tok;
    std::istringstream ss(text);
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(io::trim(tok)));
    return out;
}

std::string levels_to_string(const Vec& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += io::fmt(v[i]);
    }
    return out;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw validation_error("cannot create output directory: " + dir);
}

// config values fill in options that were not set on the command line
class ConfigOverlay {
public:
    explicit ConfigOverlay(const std::string& path) {
        if (!path.empty()) {
            if (!fs::exists(path)) throw validation_error("config file not found: " + path);
            cfg_ = io::load_config(path);
        }
    }

    void apply(CLI::App* cmd, const std::string& section) {
        for (CLI::Option* opt : cmd->get_options()) {
            const auto& lnames = opt->get_lnames();
            if (lnames.empty()) continue;
            const std::string& name = lnames.front();
            if (name == "config" || name == "help") continue;
            const auto it = cfg_.find(section + "." + name);
            if (it == cfg_.end()) continue;
            consumed_.insert(it->first);
            if (opt->count() == 0) {
                opt->clear();
                opt->add_result(it->second);
                opt->run_callback();
            }
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : cfg_) {
            (void)value;
            if (!consumed_.count(key)) throw validation_error("unknown config key: " + key);
        }
    }

private:
    io::ConfigMap cfg_;
    std::set<std::string> consumed_;
};

struct SolverFlags {
    double alpha = 0.04, lambda = 0.1, eta = 0.1, xi = 50.0, t = 10.0, beta0 = 0.1;
    double tau_inc = 2.0, tau_dec = 2.0, nu = 10.0, c = 1e-3;
    double tol = 1e-3, y_tol = 1e-8;
    int max_inner = 500, max_outer = 200, max_xstep = 200;
    bool ista = false;
    std::string admissible = "0,1";

    void add_to(CLI::App* cmd) {
        cmd->add_option("--admissible", admissible, "comma-separated admissible levels a_0<...<a_n");
        cmd->add_option("--alpha", alpha, "multi-bang weight");
        cmd->add_option("--lambda", lambda, "TV weight on a");
        cmd->add_option("--eta", eta, "TV weight on f");
        cmd->add_option("--xi", xi, "proximal coupling weight (inf allowed)");
        cmd->add_option("--t", t, "prox/ISTA step (needs alpha*t < 1/2)");
        cmd->add_option("--beta0", beta0, "initial ADMM penalty");
        cmd->add_option("--tau-inc", tau_inc, "beta growth factor");
        cmd->add_option("--tau-dec", tau_dec, "beta shrink factor");
        cmd->add_option("--nu", nu, "residual balance ratio");
        cmd->add_option("--c", c, "TV smoothing constant");
        cmd->add_option("--tol", tol, "tolerances delta_1..delta_5");
        cmd->add_option("--y-tol", y_tol, "y-update optimality residual");
        cmd->add_option("--max-inner", max_inner, "ADMM iteration cap");
        cmd->add_option("--max-outer", max_outer, "outer iteration cap");
        cmd->add_option("--max-xstep", max_xstep, "x-step iteration cap");
        cmd->add_flag("--ista", ista, "plain ISTA instead of FISTA");
    }

    SolverConfig to_config() const {
        SolverConfig cfg;
        cfg.admissible = AdmissibleSet(parse_levels(admissible));
        cfg.alpha = alpha;
        cfg.lambda = lambda;
        cfg.eta = eta;
        cfg.xi = xi;
        cfg.t = t;
        cfg.beta0 = beta0;
        cfg.tau_inc = tau_inc;
        cfg.tau_dec = tau_dec;
        cfg.nu = nu;
        cfg.c = c;
        cfg.delta1 = cfg.delta2 = cfg.delta3 = cfg.delta4 = cfg.delta5 = tol;
        cfg.y_tol = y_tol;
        cfg.max_inner = max_inner;
        cfg.max_outer = max_outer;
        cfg.max_xstep = max_xstep;
        cfg.use_fista = !ista;
        cfg.validate();
        return cfg;
    }

    void manifest(ManifestWriter& mw) const {
        mw.put("solver", "admissible", admissible);
        mw.put("solver", "alpha", alpha);
        mw.put("solver", "lambda", lambda);
        mw.put("solver", "eta", eta);
        mw.put("solver", "xi", xi);
        mw.put("solver", "t", t);
        mw.put("solver", "beta0", beta0);
        mw.put("solver", "tau-inc", tau_inc);
        mw.put("solver", "tau-dec", tau_dec);
        mw.put("solver", "nu", nu);
        mw.put("solver", "c", c);
        mw.put("solver", "tol", tol);
        mw.put("solver", "y-tol", y_tol);
        mw.put("solver", "max-inner", max_inner);
        mw.put("solver", "max-outer", max_outer);
        mw.put("solver", "max-xstep", max_xstep);
        mw.put("solver", "ista", ista ? "true" : "false");
    }
};

// ---------------------------------------------------------------------------
// phantom
// ---------------------------------------------------------------------------

int run_phantom(const std::string& name, int grid_m, std::uint64_t seed, const std::string& out) {
    const PhantomSpec spec = phantom_by_name(name);
    const PixelGrid grid(grid_m, 2.0 / grid_m);
    auto [a, f] = make_phantom(spec, grid);
    ensure_out_dir(out);
    io::write_image_csv(out + "/a.csv", a);
    io::write_image_csv(out + "/f.csv", f);
    io::write_image_pgm(out + "/a.pgm", a);
    io::write_image_pgm(out + "/f.pgm", f);

    ManifestWriter mw;
    mw.put("phantom", "name", name);
    mw.put("phantom", "grid", grid_m);
    mw.put("phantom", "dx", grid.dx);
    mw.put("phantom", "admissible", levels_to_string(spec.admissible.levels));
    mw.put("phantom", "seed", seed);
    for (size_t i = 0; i < spec.source.size(); ++i)
        mw.put("phantom", "source" + std::to_string(i),
               io::fmt(spec.source[i].center.x) + "," + io::fmt(spec.source[i].center.y) + "," +
                   io::fmt(spec.source[i].radius) + "," + io::fmt(spec.source[i].amplitude));
    mw.write(out + "/manifest.txt");
    return 0;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

int run_forward(const std::string& a_path, const std::string& f_path, int projections, int detectors,
                double noise, std::uint64_t seed, const std::string& out) {
    const Image a = io::read_image_csv(a_path);
    const Image f = io::read_image_csv(f_path);
    if (!(a.grid == f.grid)) throw validation_error("a and f grids differ");
    if (detectors <= 0) detectors = default_detector_count(a.grid.m);

    const ProjectionGeometry geom = make_geometry(projections, detectors, a.grid, seed);
    Sinogram sino = forward(a, f, geom);
    if (noise > 0.0) sino = add_noise(sino, noise, seed + 0x9e3779b97f4a7c15ull);

    ensure_out_dir(out);
    io::write_sinogram_csv(out + "/sinogram.csv", sino);

    ManifestWriter mw;
    mw.put("forward", "a", a_path);
    mw.put("forward", "f", f_path);
    mw.put("forward", "grid", a.grid.m);
    mw.put("forward", "projections", projections);
    mw.put("forward", "detectors", detectors);
    mw.put("forward", "noise", noise);
    mw.put("forward", "seed", seed);
    mw.write(out + "/manifest.txt");
    return 0;
}

// ---------------------------------------------------------------------------
// recon
// ---------------------------------------------------------------------------

int run_recon(const std::string& sino_path, int grid_m, const SolverFlags& flags,
              const std::string& truth_path, const std::string& out) {
    const Sinogram sino = io::read_sinogram_csv(sino_path);
    const SolverConfig cfg = flags.to_config();
    const PixelGrid grid(grid_m, 2.0 / grid_m);
    const Image a0(grid, cfg.admissible.lo());

    ReconState st;
    try {
        st = joint_reconstruct(sino, cfg, a0);
    } catch (const solver_error& e) {
        std::fprintf(stderr, "solver failure: %s\n%s\n", e.what(), e.state_dump.c_str());
        return 4;
    }

    ensure_out_dir(out);
    io::write_image_csv(out + "/a_recon.csv", st.a);
    io::write_image_csv(out + "/f_recon.csv", st.f);
    io::write_image_pgm(out + "/a_recon.pgm", st.a);
    io::write_image_pgm(out + "/f_recon.pgm", st.f);
    io::write_text(out + "/history.csv", io::history_csv(st.history));

    const Image a_written = io::read_image_csv(out + "/a_recon.csv");
    const double mb = multibang_proportion(a_written, cfg.admissible, 1e-9);

    std::string summary;
    summary += "outer_iterations: " + std::to_string(st.k) + "\n";
    summary += "final_objective: " + io::fmt(st.history.empty() ? 0.0 : st.history.back().objective) + "\n";
    summary += "mb_proportion: " + io::fmt(mb) + "\n";
    summary += "a_admm_converged: " + std::string(st.a_converged ? "true" : "false") + "\n";
    summary += "f_admm_converged: " + std::string(st.f_converged ? "true" : "false") + "\n";

    if (!truth_path.empty()) {
        const Image truth = io::read_image_csv(truth_path);
        if (!(truth.grid == st.a.grid)) throw validation_error("truth grid differs from reconstruction grid");
        // classify every pixel to its nearest level and count the confusion
        std::map<std::pair<size_t, size_t>, size_t> confusion;
        size_t wrong = 0;
        const Vec& lv = cfg.admissible.levels;
        const auto level_of = [&](double v) {
            size_t best = 0;
            for (size_t i = 1; i < lv.size(); ++i)
                if (std::abs(v - lv[i]) < std::abs(v - lv[best])) best = i;
            return best;
        };
        for (size_t i = 0; i < truth.values.size(); ++i) {
            const size_t want = level_of(truth.values[i]);
            const size_t got = level_of(st.a.values[i]);
            ++confusion[{want, got}];
            if (want != got) ++wrong;
        }
        summary += "misclassification: " +
                   io::fmt(static_cast<double>(wrong) / static_cast<double>(truth.values.size())) + "\n";
        for (const auto& [key, count] : confusion)
            summary += "confusion_" + io::fmt(lv[key.first]) + "_as_" + io::fmt(lv[key.second]) + ": " +
                       std::to_string(count) + "\n";
    }
    io::write_text(out + "/summary.txt", summary);

    ManifestWriter mw;
    mw.put("recon", "sinogram", sino_path);
    mw.put("recon", "grid", grid_m);
    mw.put("recon", "truth", truth_path.empty() ? "(none)" : truth_path);
    flags.manifest(mw);
    mw.write(out + "/manifest.txt");
    return 0;
}

// ---------------------------------------------------------------------------
// singscan
// ---------------------------------------------------------------------------

struct Lab {
    NestedConvexPhantom phantom;
    SmoothSource source;
    std::string description;
};

Lab make_lab(const std::string& name) {
    if (name == "disk")
        return {NestedConvexPhantom({make_disk({0.0, 0.0}, 0.6)}, {0.8}),
                SmoothSource({{{0.0, 0.0}, 0.9, 1.0}}), "disk r=0.6 a=0.8"};
    if (name == "disk_in_disk")
        return {NestedConvexPhantom({make_disk({0.0, 0.0}, 0.65), make_disk({0.1, -0.05}, 0.3)},
                                    {0.4, 0.4}),
                SmoothSource({{{0.0, 0.0}, 0.95, 1.0}}), "disks r=0.65,0.3 a=0.4,0.8"};
    if (name == "square")
        return {NestedConvexPhantom({make_polygon({{-0.7, -0.7}, {0.7, -0.7}, {0.7, 0.7}, {-0.7, 0.7}})},
                                    {0.5}),
                SmoothSource({{{0.0, 0.0}, 1.1, 1.0}}), "square half=0.7 a=0.5"};
    if (name == "square_disk")
        return {NestedConvexPhantom({make_polygon({{-0.7, -0.7}, {0.7, -0.7}, {0.7, 0.7}, {-0.7, 0.7}}),
                                     make_disk({0.0, 0.0}, 0.35)},
                                    {0.4, 0.4}),
                SmoothSource({{{0.0, 0.0}, 1.1, 1.0}}), "square half=0.7 + disk r=0.35"};
    if (name == "superdisk")
        return {NestedConvexPhantom({make_superdisk({0.0, 0.0}, 0.6)}, {0.8}),
                SmoothSource({{{0.0, 0.0}, 0.9, 1.0}}), "quartic ball R=0.6 a=0.8"};
    throw CLI::ValidationError("--lab", "unknown lab phantom: " + name);
}

void write_report(const std::string& out, const std::vector<std::pair<std::string, std::string>>& rows,
                  const std::string& heading) {
    std::string csv = "metric,value\n";
    std::string txt = heading + "\n" + std::string(heading.size(), '-') + "\n";
    for (const auto& [k, v] : rows) {
        csv += k + "," + v + "\n";
        txt += "  " + k + ": " + v + "\n";
    }
    io::write_text(out + "/report.csv", csv);
    io::write_text(out + "/report.txt", txt);
}

int run_singscan(const std::string& lab_name, const std::string& mode, const std::string& out) {
    const Lab lab = make_lab(lab_name);
    ensure_out_dir(out);
    std::vector<std::pair<std::string, std::string>> rows;
    rows.emplace_back("lab", lab.description);
    rows.emplace_back("mode", mode);

    if (mode == "tangent") {
        if (lab.phantom.sets[0].kind != ConvexShape::Kind::disk)
            throw validation_error("tangent mode expects a disk lab");
        const double r = lab.phantom.sets[0].radius;
        const Ray ray{r, 0.0};
        const Point2 tangency{0.0, r};
        const DerivativeScan scan = ds_scan(lab.phantom, lab.source, ray.s, ray.omega, 3.2e-4, 12);
        io::write_text(out + "/scan.csv", io::scan_csv(scan.offsets, scan.values));
        const TangentPrediction pred =
            predict_tangent_coefficient(lab.phantom, lab.source, tangency, ray);
        const double meas = measure_tangent_coefficient(scan, pred.singular_side);
        const double expo = tangent_exponent(scan, pred.singular_side);
        rows.emplace_back("singular_side", std::to_string(pred.singular_side));
        rows.emplace_back("exponent", io::fmt(expo));
        rows.emplace_back("measured_coefficient", io::fmt(meas));
        rows.emplace_back("predicted_coefficient", io::fmt(pred.coefficient));
        rows.emplace_back("ratio", io::fmt(meas / pred.coefficient));
        write_report(out, rows, "tangent scan (half-order singularity)");
        return 0;
    }
    if (mode == "corner") {
        if (lab.phantom.sets[0].kind != ConvexShape::Kind::polygon)
            throw validation_error("corner mode expects a polygon lab");
        const Point2 corner = lab.phantom.sets[0].vertices[2];  // upper-right for the square labs
        const double w = kPi / 4.0;
        const Point2 pp{-std::sin(w), std::cos(w)};
        const Ray ray{corner.x * pp.x + corner.y * pp.y, w};
        const DerivativeScan scan = ds_scan(lab.phantom, lab.source, ray.s, ray.omega, 8e-3, 12);
        io::write_text(out + "/scan.csv", io::scan_csv(scan.offsets, scan.values));
        const double meas = measure_corner_jump(scan);
        const double pred = predict_corner_jump(lab.phantom, lab.source, corner, ray);
        rows.emplace_back("measured_jump", io::fmt(meas));
        rows.emplace_back("predicted_jump", io::fmt(pred));
        rows.emplace_back("ratio", io::fmt(meas / pred));
        // Lemma 1 on a generic ray: the one-sided limits agree
        const DerivativeScan gscan = ds_scan(lab.phantom, lab.source, 0.19, 0.37, 8e-3, 12);
        rows.emplace_back("generic_ray_limit_gap", io::fmt(measure_corner_jump(gscan)));
        write_report(out, rows, "corner scan (bounded derivative jump)");
        return 0;
    }
    if (mode == "flat") {
        if (lab.phantom.sets[0].kind != ConvexShape::Kind::polygon)
            throw validation_error("flat mode expects a polygon lab");
        const double half = lab.phantom.sets[0].vertices[2].x;
        const Ray edge{-half, kPi / 2.0};  // line x = half, oriented upward
        rows.emplace_back("edge_ray_flat", detect_flat_segment(lab.phantom, lab.source, edge) ? "true" : "false");
        const Ray off{-half + 0.2, kPi / 2.0};
        rows.emplace_back("interior_ray_flat", detect_flat_segment(lab.phantom, lab.source, off) ? "true" : "false");
        write_report(out, rows, "flat segment detection (value jump)");
        return 0;
    }
    if (mode == "locate") {
        if (lab.phantom.sets[0].kind != ConvexShape::Kind::disk)
            throw validation_error("locate mode expects a disk lab");
        const double r = lab.phantom.sets[0].radius;
        const Ray ray{r, 0.0};
        std::vector<Point2> cands;
        for (double t = -1.0; t <= 1.0001; t += 0.02) cands.push_back(ray.point(t));
        const TangencyLocation loc = locate_tangency_point(lab.phantom, lab.source, ray, cands);
        io::write_text(out + "/scan.csv", io::scan_csv(
            [&] { Vec ts; for (double t = -1.0; t <= 1.0001; t += 0.02) ts.push_back(t); return ts; }(),
            loc.scores));
        rows.emplace_back("located_x", io::fmt(loc.point.x));
        rows.emplace_back("located_y", io::fmt(loc.point.y));
        rows.emplace_back("truth_x", io::fmt(0.0));
        rows.emplace_back("truth_y", io::fmt(r));
        rows.emplace_back("error", io::fmt(norm(loc.point - Point2{0.0, r})));
        write_report(out, rows, "tangency point location (weighted omega limit)");
        return 0;
    }
    if (mode == "recover") {
        Vec s_grid, w_grid;
        for (int i = 0; i < 161; ++i) s_grid.push_back(-1.0 + 2.0 * i / 160.0);
        for (int j = 0; j < 24; ++j) w_grid.push_back(kPi * j / 24.0);
        const auto sets = recover_nested_boundaries(lab.phantom, lab.source, s_grid, w_grid);
        io::write_text(out + "/boundaries.csv", io::boundaries_csv(sets));
        rows.emplace_back("recovered_sets", std::to_string(sets.size()));
        for (size_t j = 0; j < sets.size(); ++j) {
            const CircleFit fit = fit_circle(sets[j]);
            rows.emplace_back("set" + std::to_string(j) + "_points", std::to_string(sets[j].size()));
            rows.emplace_back("set" + std::to_string(j) + "_center",
                              io::fmt(fit.center.x) + ";" + io::fmt(fit.center.y));
            rows.emplace_back("set" + std::to_string(j) + "_radius", io::fmt(fit.radius));
        }
        write_report(out, rows, "nested boundary recovery (hull peeling)");
        return 0;
    }
    throw CLI::ValidationError("--mode", "unknown scan mode: " + mode);
}

// ---------------------------------------------------------------------------
// verify: quick property suite
// ---------------------------------------------------------------------------

int run_verify() {
    int failures = 0;
    const auto check = [&](const char* name, bool ok) {
        std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    check("sinhc(0) == 1", sinhc(0.0) == 1.0);
    check("sinhc even", sinhc(0.73) == sinhc(-0.73));

    {
        PixelGrid g(24, 2.0 / 24.0);
        Rng rng(11);
        bool ok = true;
        for (int i = 0; i < 1000 && ok; ++i) {
            const Ray ray{rng.uniform(-1.5, 1.5), rng.uniform(0.0, 2.0 * kPi)};
            const RayTrace tr = trace_ray(g, ray);
            if (tr.empty()) continue;
            double sum = 0.0;
            for (double len : tr.lengths) sum += len;
            const double chord = tr.breakpoints.back() - tr.breakpoints.front();
            ok = std::abs(sum - chord) <= 1e-10 * std::max(1.0, chord);
        }
        check("trace chord sums", ok);
    }
    {
        PixelGrid g(12, 2.0 / 12.0);
        Rng rng(7);
        const ProjectionGeometry geom = make_geometry(6, 20, g, 3);
        bool ok = true;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            Image a(g), f(g);
            for (auto& v : a.values) v = rng.uniform(0.0, 1.0);
            for (auto& v : f.values) v = rng.uniform(0.0, 1.0);
            const Sinogram s1 = forward(a, f, geom);
            const Vec s2 = assemble_system_matrix(a, geom).apply(f.values);
            for (size_t i = 0; i < s1.d.size(); ++i)
                if (s1.d[i] != s2[i]) ok = false;
        }
        check("forward equals system matrix bitwise", ok);
    }
    {
        PixelGrid g(9, 0.2);
        Rng rng(5);
        Image a(g);
        for (auto& v : a.values) v = rng.uniform(-1.0, 1.0);
        Vec y(static_cast<size_t>(2 * (g.pixel_count() - 1)));
        for (auto& v : y) v = rng.uniform(-1.0, 1.0);
        const double lhs = vdot(apply_D(a), y);
        const double rhs = vdot(a.values, apply_D_transpose(y, g).values);
        check("D adjoint identity", std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + 1.0));
    }
    {
        const AdmissibleSet A(Vec{0.0, 0.25, 0.5, 0.75, 1.0});
        Rng rng(17);
        bool ok = true;
        for (int i = 0; i < 100 && ok; ++i) {
            const double w = rng.uniform(0.01, 0.49);
            const double x = rng.uniform(-0.3, 1.3);
            const double p = multibang_prox(x, A, w);
            double best_z = 0.0, best_v = std::numeric_limits<double>::infinity();
            for (double z = 0.0; z <= 1.0 + 1e-12; z += 1e-5) {
                const double v = w * multibang_pointwise(z, A) + 0.5 * (z - x) * (z - x);
                if (v < best_v) {
                    best_v = v;
                    best_z = z;
                }
            }
            ok = std::abs(p - best_z) <= 1e-4;
        }
        check("prox matches grid-search argmin", ok);
        bool fixed = true;
        for (double ai : A.levels) fixed = fixed && multibang_prox(ai, A, 0.3) == ai;
        check("prox fixes admissible levels", fixed);
    }
    {
        // fidelity gradient vs central differences on a small instance
        PixelGrid g(6, 1.0 / 3.0);
        Rng rng(23);
        Image a(g), f(g);
        for (auto& v : a.values) v = rng.uniform(0.1, 0.9);
        for (auto& v : f.values) v = rng.uniform(0.0, 1.0);
        const ProjectionGeometry geom = make_geometry(5, 10, g, 2);
        Image atr(g);
        for (auto& v : atr.values) v = rng.uniform(0.1, 0.9);
        const Sinogram d = forward(atr, f, geom);
        const Image grad = fidelity_gradient_a(a, f, d);
        const double h = 1e-5;
        double err = 0.0, nrm = 0.0;
        const auto fid = [&](const Image& x) {
            const Sinogram s = forward(x, f, geom);
            double acc = 0.0;
            for (size_t i = 0; i < s.d.size(); ++i) {
                const double r = s.d[i] - d.d[i];
                acc += r * r;
            }
            return acc;
        };
        for (size_t j = 0; j < a.values.size(); ++j) {
            Image ap = a, am = a;
            ap.values[j] += h;
            am.values[j] -= h;
            const double fd = (fid(ap) - fid(am)) / (2.0 * h);
            err += (fd - grad.values[j]) * (fd - grad.values[j]);
            nrm += fd * fd;
        }
        check("fidelity gradient matches finite differences", std::sqrt(err / nrm) <= 1e-5);
    }
    {
        SolverConfig cfg;
        cfg.admissible = AdmissibleSet(Vec{0.0, 1.0});
        check("beta grows on primal dominance", beta_update(10.0, 1.0, 1.0, cfg) == cfg.tau_inc);
        check("beta shrinks on dual dominance", beta_update(1.0, 10.0, 2.0, cfg) == 2.0 / cfg.tau_dec);
        check("beta fixed when balanced", beta_update(1.0, 1.0, 3.0, cfg) == 3.0);
    }
    {
        NestedConvexPhantom ph({make_disk({0.0, 0.0}, 0.6)}, {0.8});
        SmoothSource src({{{0.0, 0.0}, 0.9, 1.0}});
        const DerivativeScan scan = ds_scan(ph, src, 0.2, 0.7, 8e-3, 8);
        check("generic ray derivative continuous", std::abs(measure_corner_jump(scan)) <= 1e-4);
    }

    std::printf("%s\n", failures == 0 ? "verify: all checks passed" : "verify: FAILURES");
    return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-bang SPECT joint reconstruction and AtRT singularity lab"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "flat key = value configuration file");

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "write a phantom pair (a, f)");
    std::string ph_name = "nested_disks";
    int ph_grid = 64;
    std::uint64_t ph_seed = 1;
    std::string ph_out = "out";
    cmd_phantom->add_option("--phantom", ph_name, "binary_shapes|three_region|multibang_shepp_logan|nested_disks");
    cmd_phantom->add_option("--grid", ph_grid, "pixels per side");
    cmd_phantom->add_option("--seed", ph_seed, "seed");
    cmd_phantom->add_option("--out", ph_out, "output directory");

    // forward
    auto* cmd_forward = app.add_subcommand("forward", "compute a (optionally noisy) sinogram");
    std::string fw_a = "a.csv", fw_f = "f.csv", fw_out = "out";
    int fw_proj = 12, fw_det = 0;
    double fw_noise = 0.0;
    std::uint64_t fw_seed = 1;
    cmd_forward->add_option("--a", fw_a, "attenuation image CSV");
    cmd_forward->add_option("--f", fw_f, "source image CSV");
    cmd_forward->add_option("--projections", fw_proj, "number of projection angles");
    cmd_forward->add_option("--detectors", fw_det, "offsets per projection (0 = M*sqrt(2))");
    cmd_forward->add_option("--noise", fw_noise, "Gaussian noise level (fraction of RMS)");
    cmd_forward->add_option("--seed", fw_seed, "seed for angle perturbation and noise");
    cmd_forward->add_option("--out", fw_out, "output directory");

    // recon
    auto* cmd_recon = app.add_subcommand("recon", "joint reconstruction of a and f");
    std::string rc_sino = "sinogram.csv", rc_truth, rc_out = "out";
    int rc_grid = 64;
    SolverFlags rc_flags;
    cmd_recon->add_option("--sinogram", rc_sino, "sinogram CSV");
    cmd_recon->add_option("--grid", rc_grid, "reconstruction grid side");
    cmd_recon->add_option("--truth", rc_truth, "ground-truth a CSV for confusion counts");
    cmd_recon->add_option("--out", rc_out, "output directory");
    rc_flags.add_to(cmd_recon);

    // singscan
    auto* cmd_sing = app.add_subcommand("singscan", "singularity lab scans and recovery");
    std::string sg_lab = "disk", sg_mode = "tangent", sg_out = "out";
    cmd_sing->add_option("--lab", sg_lab, "disk|disk_in_disk|square|square_disk|superdisk");
    cmd_sing->add_option("--mode", sg_mode, "tangent|corner|flat|locate|recover");
    cmd_sing->add_option("--out", sg_out, "output directory");

    // verify
    auto* cmd_verify = app.add_subcommand("verify", "run the quick property suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        ConfigOverlay overlay(config_path);
        overlay.apply(cmd_phantom, "phantom");
        overlay.apply(cmd_forward, "forward");
        overlay.apply(cmd_recon, "recon");
        overlay.apply(cmd_sing, "singscan");
        overlay.reject_unknown();

        if (cmd_phantom->parsed()) return run_phantom(ph_name, ph_grid, ph_seed, ph_out);
        if (cmd_forward->parsed()) return run_forward(fw_a, fw_f, fw_proj, fw_det, fw_noise, fw_seed, fw_out);
        if (cmd_recon->parsed()) return run_recon(rc_sino, rc_grid, rc_flags, rc_truth, rc_out);
        if (cmd_sing->parsed()) return run_singscan(sg_lab, sg_mode, sg_out);
        if (cmd_verify->parsed()) return run_verify();
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const validation_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const solver_error& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 4;
    }
    return 0;
}
