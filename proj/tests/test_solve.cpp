#include <catch2/catch.hpp>

#include <cmath>
#include <limits>

#include "atrt/phantom.hpp"
#include "atrt/solve.hpp"
#include "atrt/vecops.hpp"

using namespace atrt;

namespace {

SolverConfig base_config(Vec levels) {
    SolverConfig cfg;
    cfg.admissible = AdmissibleSet(std::move(levels));
    cfg.alpha = 0.1;
    cfg.lambda = 1e-3;
    cfg.eta = 1e-3;
    cfg.t = 1.0;
    cfg.beta0 = 1.0;
    cfg.c = 1e-3;
    return cfg;
}

Image random_image(const PixelGrid& g, Rng& rng, double lo, double hi) {
    Image img(g);
    for (auto& v : img.values) v = rng.uniform(lo, hi);
    return img;
}

}  // namespace

TEST_CASE("beta update follows the three cases") {
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.tau_inc = 3.0;
    cfg.tau_dec = 4.0;
    cfg.nu = 5.0;
    CHECK(beta_update(10.0, 1.0, 2.0, cfg) == 6.0);
    CHECK(beta_update(1.0, 10.0, 2.0, cfg) == 0.5);
    CHECK(beta_update(1.0, 1.0, 2.0, cfg) == 2.0);
    CHECK(beta_update(0.0, 0.0, 2.0, cfg) == 2.0);
}

TEST_CASE("solver config validation") {
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.6;
    cfg.t = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.alpha = 0.1;
    cfg.beta0 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("y step closed forms and residuals") {
    Rng rng(10);

    SECTION("zero multiplier and zero Dx give zero") {
        const Vec y = y_step_weighted(Vec(8, 0.3), Vec(8, 0.0), 2.0, Vec(8, 0.0), 0.5, 1e-3, 1e-10, 50000);
        for (double v : y) CHECK(std::abs(v) <= 1e-9);
    }
    SECTION("lambda = 0 reduces to Dx + mu/beta exactly") {
        Vec mu(10), dx(10), warm(10, 0.0);
        for (size_t i = 0; i < mu.size(); ++i) {
            mu[i] = rng.uniform(-1.0, 1.0);
            dx[i] = rng.uniform(-1.0, 1.0);
        }
        const double beta = 1.7;
        const Vec y = y_step_weighted(warm, mu, beta, dx, 0.0, 1e-3, 1e-8, 100);
        for (size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == dx[i] + mu[i] / beta);
    }
    SECTION("optimality residual drops below the tolerance") {
        const double lambda = 0.4, beta = 0.9, c = 1e-3;
        Vec mu(20), dx(20), warm(20, 0.0);
        for (size_t i = 0; i < mu.size(); ++i) {
            mu[i] = rng.uniform(-0.5, 0.5);
            dx[i] = rng.uniform(-0.5, 0.5);
        }
        const Vec y = y_step_weighted(warm, mu, beta, dx, lambda, c, 1e-8, 100000);
        for (size_t i = 0; i + 1 < y.size(); i += 2) {
            const double rad = std::sqrt(y[i] * y[i] + y[i + 1] * y[i + 1] + c);
            const double g0 = lambda * y[i] / rad - mu[i] + beta * (y[i] - dx[i]);
            const double g1 = lambda * y[i + 1] / rad - mu[i + 1] + beta * (y[i + 1] - dx[i + 1]);
            REQUIRE(std::hypot(g0, g1) <= 1e-8);
        }
    }
}

TEST_CASE("x step on a constant image with no data reaches the nearest level") {
    const PixelGrid g(4, 0.5);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.3;
    cfg.t = 1.0;  // w = 0.3
    cfg.xi = std::numeric_limits<double>::infinity();
    cfg.delta1 = 1e-10;
    cfg.lambda = 0.0;

    Image f(g, 0.0);
    const ProjectionGeometry geom = make_geometry(2, 5, g, 1);
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d{geom, Vec(geom.ray_count(), 0.0)};

    AdmmState st;
    st.x.assign(static_cast<size_t>(g.pixel_count()), 0.28);  // below x_{0,+} = 0.3
    st.y.assign(static_cast<size_t>(2 * (g.pixel_count() - 1)), 0.0);
    st.mu.assign(st.y.size(), 0.0);
    st.beta = 1.0;

    const Image prev(g, 0.28);
    const Image x = x_step(st, prev, f, d, cfg, tg);
    for (double v : x.values) CHECK(v == 0.0);

    st.x.assign(st.x.size(), 0.6);  // above x_{1,-} = 0.7? no: x_{1,-} = 1 - 0.3 = 0.7, so 0.6 is interior
    const Image x2 = x_step(st, Image(g, 0.6), f, d, cfg, tg);
    for (double v : x2.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("x step on one pixel matches a brute-force search for quadratic h") {
    const PixelGrid g(1, 1.0);
    SolverConfig cfg = base_config({0.0, 0.5, 1.0});
    cfg.alpha = 0.1;
    cfg.t = 0.4;   // below 1/L for the quadratic h below
    cfg.xi = 0.5;  // h(x) = (x - a_prev)^2 / (2 xi) = (x - a_prev)^2
    cfg.delta1 = 1e-9;
    cfg.max_xstep = 5000;
    cfg.lambda = 0.0;

    Image f(g, 0.0);
    const ProjectionGeometry geom{{0.0}, {10.0}};  // ray misses: pure quadratic h
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d{geom, Vec(1, 0.0)};

    for (double a_prev_val : {0.06, 0.2, 0.31, 0.62, 0.97}) {
        AdmmState st;
        st.x.assign(1, a_prev_val);
        st.beta = 1.0;
        const Image x = x_step(st, Image(g, a_prev_val), f, d, cfg, tg);

        double best_z = 0.0, best_v = std::numeric_limits<double>::infinity();
        for (double z = 0.0; z <= 1.0 + 1e-12; z += 1e-5) {
            const double v = (z - a_prev_val) * (z - a_prev_val) +
                             cfg.alpha * multibang_pointwise(z, cfg.admissible);
            if (v < best_v) {
                best_v = v;
                best_z = z;
            }
        }
        REQUIRE(std::abs(x.values[0] - best_z) <= 1e-4);
    }
}

TEST_CASE("a update is stationary at exact multi-bang data") {
    const PixelGrid g(8, 0.25);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.45;
    cfg.t = 1.0;  // strong snap, w = 0.45
    cfg.lambda = 1e-4;
    cfg.delta2 = 1e-4;
    cfg.delta3 = 1e-4;
    cfg.max_inner = 300;

    Rng rng(6);
    Image truth(g, 0.0);
    for (int r = 3; r < 6; ++r)
        for (int c = 2; c < 6; ++c) truth.at(r, c) = 1.0;
    const Image f = random_image(g, rng, 0.5, 1.5);
    const ProjectionGeometry geom = make_geometry(8, 16, g, 2);
    const Sinogram d = forward(truth, f, geom);

    const AdmmResult res = a_update(truth, f, d, cfg);
    REQUIRE(res.converged);
    CHECK(res.r <= cfg.delta2);
    CHECK(res.s_res <= cfg.delta3);
    for (size_t i = 0; i < truth.values.size(); ++i)
        REQUIRE(res.x.values[i] == Approx(truth.values[i]).margin(1e-9));
}

TEST_CASE("a update finds the enumeration optimum on a 2x2 toy") {
    const PixelGrid g(2, 1.0);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.4;
    cfg.t = 0.2;  // below the data-term stability bound for this toy
    cfg.lambda = 1e-3;
    cfg.xi = std::numeric_limits<double>::infinity();
    cfg.delta1 = 1e-8;
    cfg.delta2 = 1e-6;
    cfg.delta3 = 1e-6;
    cfg.max_inner = 400;

    Image truth(g, Vec{0.0, 1.0, 1.0, 0.0});
    Image f(g, Vec{1.0, 1.3, 0.8, 1.1});
    const ProjectionGeometry geom = make_geometry(6, 7, g, 4);
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d = forward(truth, f, geom);

    const AdmmResult res = a_update(Image(g, 0.0), f, d, cfg, tg);

    // exhaustive search over all multi-bang assignments
    double best_obj = std::numeric_limits<double>::infinity();
    Vec best_x;
    for (int mask = 0; mask < 16; ++mask) {
        Image cand(g, 0.0);
        for (int b = 0; b < 4; ++b) cand.values[static_cast<size_t>(b)] = (mask >> b) & 1 ? 1.0 : 0.0;
        const double obj = objective_value(cand, f, d, cfg, tg);
        if (obj < best_obj) {
            best_obj = obj;
            best_x = cand.values;
        }
    }
    REQUIRE(best_x == truth.values);  // the toy is well posed
    for (size_t i = 0; i < 4; ++i) REQUIRE(res.x.values[i] == Approx(best_x[i]).margin(1e-6));
}

TEST_CASE("f update solves least squares when eta = 0 and xi = inf") {
    const PixelGrid g(8, 0.25);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.eta = 0.0;
    cfg.xi = std::numeric_limits<double>::infinity();
    cfg.delta4 = 1e-7;
    cfg.max_cg = 2000;

    Rng rng(14);
    const Image a = random_image(g, rng, 0.0, 0.8);
    const Image f_true = random_image(g, rng, 0.0, 1.0);
    const ProjectionGeometry geom = make_geometry(8, 12, g, 3);
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d = forward(a, f_true, geom);

    const FUpdateResult res = f_update(a, Image(g, 0.0), d, cfg, tg);
    REQUIRE(res.converged);
    const SystemMatrix R = assemble_system_matrix(a, tg);
    Vec resid = R.apply(res.f.values);
    for (size_t i = 0; i < resid.size(); ++i) resid[i] -= d.d[i];
    Vec normal = R.apply_transpose(resid);
    for (double& v : normal) v *= 2.0;
    CHECK(vnorm(normal) <= 1e-6);
}

TEST_CASE("f update recovers the source on a well-posed instance") {
    const PixelGrid g(16, 0.125);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.eta = 1e-6;
    cfg.xi = std::numeric_limits<double>::infinity();
    cfg.delta4 = 1e-6;
    cfg.delta2 = 1e-5;
    cfg.delta3 = 1e-5;
    cfg.max_cg = 3000;
    cfg.max_inner = 200;

    PhantomSpec spec = phantom_by_name("nested_disks");
    const auto [a, f_true] = make_phantom(spec, g);
    const ProjectionGeometry geom = make_geometry(16, 64, g, 8);  // 1024 rays >= 4 * 256 pixels
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d = forward(a, f_true, geom);

    const FUpdateResult res = f_update(a, Image(g, 0.0), d, cfg, tg);
    double rms = vdist(res.f.values, f_true.values) / std::sqrt(static_cast<double>(f_true.values.size()));
    CHECK(rms <= 1e-3);
}

TEST_CASE("f update is a fixed point of its own output") {
    const PixelGrid g(8, 0.25);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.eta = 0.05;
    cfg.xi = 50.0;
    cfg.delta4 = 1e-6;

    Rng rng(17);
    const Image a = random_image(g, rng, 0.0, 0.8);
    const Image f_true = random_image(g, rng, 0.2, 1.0);
    const ProjectionGeometry geom = make_geometry(8, 12, g, 5);
    const TracedGeometry tg = trace_geometry(g, geom);
    const Sinogram d = forward(a, f_true, geom);

    const FUpdateResult first = f_update(a, Image(g, 0.0), d, cfg, tg);
    const FUpdateResult again = f_update(a, first.f, d, cfg, tg);
    CHECK(vdist(again.f.values, first.f.values) <= 1e-2 * (1.0 + vnorm(first.f.values)));
}

TEST_CASE("multibang proportion") {
    const PixelGrid g(4, 0.5);
    const AdmissibleSet A(Vec{0.0, 1.0});
    Image exact(g, 0.0);
    exact.values[3] = 1.0;
    CHECK(multibang_proportion(exact, A, 0.0) == 1.0);
    Image mid(g, 0.5);
    CHECK(multibang_proportion(mid, A, 0.4) == 0.0);
    Image zero(g, 0.0);
    CHECK(multibang_proportion(zero, A, 0.0) == 1.0);
    CHECK_THROWS_AS(multibang_proportion(zero, A, -1.0), std::invalid_argument);
}

TEST_CASE("joint reconstruction is stationary when started at the truth") {
    const PixelGrid g(16, 0.125);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.45;
    cfg.t = 1.0;
    cfg.lambda = 1e-4;
    cfg.eta = 1e-8;
    cfg.delta4 = 1e-6;
    cfg.delta5 = 1e-3;
    cfg.max_outer = 10;
    cfg.max_cg = 3000;

    PhantomSpec spec = phantom_by_name("nested_disks");
    const auto [a_true, f_true] = make_phantom(spec, g);
    const ProjectionGeometry geom = make_geometry(16, 24, g, 6);
    const Sinogram d = forward(a_true, f_true, geom);

    const ReconState st = joint_reconstruct(d, cfg, a_true);
    CHECK(st.k == 1);
    CHECK(st.history.size() == 1);
    CHECK(vdist(st.a.values, a_true.values) <= 1e-6);
}

TEST_CASE("joint reconstruction validates the initial guess") {
    const PixelGrid g(4, 0.5);
    SolverConfig cfg = base_config({0.0, 1.0});
    Sinogram d;
    d.geometry = make_geometry(2, 5, g, 1);
    d.d.assign(d.geometry.ray_count(), 0.0);
    CHECK_THROWS_AS(joint_reconstruct(d, cfg, Image(g, -0.5)), std::invalid_argument);
}

TEST_CASE("history length equals the outer iteration count") {
    const PixelGrid g(8, 0.25);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.alpha = 0.2;
    cfg.t = 1.0;
    cfg.delta5 = 1e-12;  // never met: runs to the cap
    cfg.max_outer = 3;
    cfg.max_inner = 30;
    cfg.max_xstep = 30;

    PhantomSpec spec = phantom_by_name("nested_disks");
    const auto [a_true, f_true] = make_phantom(spec, g);
    const ProjectionGeometry geom = make_geometry(4, 12, g, 2);
    const Sinogram d = forward(a_true, f_true, geom);

    const ReconState st = joint_reconstruct(d, cfg, Image(g, 0.0));
    CHECK(st.k == 3);
    CHECK(st.history.size() == 3);
    CHECK(st.half_step_objectives.size() == 6);
    for (const auto& row : st.history) {
        CHECK(row.mb_proportion >= 0.0);
        CHECK(row.mb_proportion <= 1.0);
        CHECK(std::isfinite(row.objective));
    }
}

TEST_CASE("iterates stay inside the admissible span") {
    const PixelGrid g(8, 0.25);
    SolverConfig cfg = base_config({0.1, 0.6, 0.9});
    cfg.alpha = 0.2;
    cfg.t = 1.0;
    cfg.max_outer = 2;
    cfg.delta5 = 1e-12;
    cfg.max_inner = 25;

    PhantomSpec spec = phantom_by_name("nested_disks");
    spec.admissible = cfg.admissible;
    spec.disk_values = {0.6, 0.9};
    const auto [a_true, f_true] = make_phantom(spec, g);
    const ProjectionGeometry geom = make_geometry(4, 12, g, 3);
    const Sinogram d = forward(a_true, f_true, geom);

    const ReconState st = joint_reconstruct(d, cfg, Image(g, 0.1));
    for (double v : st.a.values) {
        CHECK(v >= cfg.admissible.lo());
        CHECK(v <= cfg.admissible.hi());
    }
}

TEST_CASE("xi = inf removes the coupling exactly") {
    const PixelGrid g(6, 1.0 / 3.0);
    SolverConfig cfg = base_config({0.0, 1.0});
    cfg.xi = std::numeric_limits<double>::infinity();

    Rng rng(8);
    const Image a = random_image(g, rng, 0.0, 1.0);
    const Image f = random_image(g, rng, 0.0, 1.0);
    const ProjectionGeometry geom = make_geometry(4, 9, g, 2);
    const TracedGeometry tg = trace_geometry(g, geom);
    Sinogram d = forward(a, f, geom);
    for (auto& v : d.d) v += 0.01;

    // independently coded uncoupled objective
    double fid = 0.0;
    const Sinogram s = forward(a, f, geom);
    for (size_t i = 0; i < s.d.size(); ++i) fid += (s.d[i] - d.d[i]) * (s.d[i] - d.d[i]);
    const double uncoupled = fid + cfg.alpha * multibang_penalty(a, cfg.admissible) +
                             cfg.lambda * tv_smoothed(a, cfg.c) + cfg.eta * tv_smoothed(f, cfg.c);
    CHECK(objective_value(a, f, d, cfg, tg) == Approx(uncoupled).epsilon(1e-15));
    CHECK(cfg.inv_xi() == 0.0);
}
