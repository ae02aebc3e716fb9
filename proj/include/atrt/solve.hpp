#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrt/forward.hpp"
#include "atrt/grid.hpp"
#include "atrt/regularize.hpp"
#include "atrt/vecops.hpp"

namespace atrt {

struct solver_error : std::runtime_error {
    explicit solver_error(const std::string& msg, std::string dump = {})
        : std::runtime_error(msg), state_dump(std::move(dump)) {}
    std::string state_dump;
};

struct SolverConfig {
    AdmissibleSet admissible;
    double alpha = 0.1;   // multi-bang weight
    double lambda = 0.05; // TV weight on a
    double eta = 0.05;    // TV weight on f
    double xi = 50.0;     // proximal coupling; +inf removes the coupling exactly
    double t = 1.0;       // prox/ISTA step, needs 0 < alpha*t < 1/2
    double beta0 = 0.1;
    double tau_inc = 2.0;
    double tau_dec = 2.0;
    double nu = 10.0;
    double c = 1e-3;      // TV smoothing
    double delta1 = 1e-3; // x-step iterate tolerance
    double delta2 = 1e-3; // primal residual
    double delta3 = 1e-3; // dual residual
    double delta4 = 1e-3; // f stationarity / least-squares tolerance
    double delta5 = 1e-3; // outer iterate tolerance
    double y_tol = 1e-8;  // inner y-update optimality residual
    int max_inner = 500;
    int max_outer = 200;
    int max_xstep = 200;
    int max_y_iters = 20000;
    int max_cg = 500;
    bool use_fista = true;
    bool project_f_nonneg = false;

    double inv_xi() const { return std::isinf(xi) ? 0.0 : 1.0 / xi; }

    void validate() const {
        if (!(alpha > 0.0 && t > 0.0 && alpha * t < 0.5))
            throw std::invalid_argument("SolverConfig: need 0 < alpha*t < 1/2");
        if (!(lambda >= 0.0 && eta >= 0.0)) throw std::invalid_argument("SolverConfig: negative TV weight");
        if (!(xi > 0.0)) throw std::invalid_argument("SolverConfig: xi must be positive (inf allowed)");
        if (!(beta0 > 0.0)) throw std::invalid_argument("SolverConfig: beta0 must be positive");
        if (!(tau_inc > 1.0 && tau_dec > 1.0 && nu > 1.0))
            throw std::invalid_argument("SolverConfig: need tau+-, nu > 1");
        if (!(c > 0.0)) throw std::invalid_argument("SolverConfig: c must be positive");
        for (double d : {delta1, delta2, delta3, delta4, delta5})
            if (!(d > 0.0)) throw std::invalid_argument("SolverConfig: tolerances must be positive");
    }
};

struct AdmmState {
    Vec x;
    Vec y;
    Vec mu;
    double beta = 0.0;
    double r = 0.0;      // ||y - Dx||
    double s_res = 0.0;  // ||beta D^T (y_{l+1} - y_l)||
};

/// Adaptive penalty of eq-betaupdate type: grow when the primal residual
/// dominates, shrink when the dual does, else keep.
inline double beta_update(double r, double s_res, double beta, const SolverConfig& cfg) {
    if (r > cfg.nu * s_res) return cfg.tau_inc * beta;
    if (s_res > cfg.nu * r) return beta / cfg.tau_dec;
    return beta;
}

/// fraction of pixels within tol of an admissible level
inline double multibang_proportion(const Image& a, const AdmissibleSet& A, double tol) {
    if (tol < 0.0) throw std::invalid_argument("multibang_proportion: tol must be >= 0");
    size_t hits = 0;
    for (double v : a.values)
        if (A.distance_to_nearest(v) <= tol) ++hits;
    return static_cast<double>(hits) / static_cast<double>(a.values.size());
}

namespace detail {

// smooth part of the x-subproblem:
//   h(x) = ||R[x]f - d||^2 + (beta/2)||y - Dx||^2 + mu^T Dx + (1/2xi)||x - a_prev||^2
// value and gradient share the forward/backward pass over the traces.
struct XStepObjective {
    const Image& f;
    const Sinogram& d;
    const TracedGeometry& tg;
    const Vec& y;
    const Vec& mu;
    double beta;
    double inv_xi;
    const Vec& a_prev;

    double value(const Image& x) const {
        double fid = 0.0;
        for (size_t i = 0; i < tg.traces.size(); ++i) {
            const double res = atrt_ray_traced(x, f, tg.traces[i]) - d.d[i];
            fid += res * res;
        }
        const Vec dx = apply_D(x);
        double quad = 0.0, lin = 0.0;
        for (size_t i = 0; i < dx.size(); ++i) {
            const double diff = y[i] - dx[i];
            quad += diff * diff;
            lin += mu[i] * dx[i];
        }
        double coup = 0.0;
        if (inv_xi > 0.0)
            for (size_t i = 0; i < x.values.size(); ++i) {
                const double diff = x.values[i] - a_prev[i];
                coup += diff * diff;
            }
        return fid + 0.5 * beta * quad + lin + 0.5 * inv_xi * coup;
    }

    Image gradient(const Image& x) const {
        Image g = fidelity_gradient_a(x, f, d, tg);
        Vec dx = apply_D(x);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] = beta * (dx[i] - y[i]) + mu[i];
        const Image dt = apply_D_transpose(dx, x.grid);
        for (size_t i = 0; i < g.values.size(); ++i) {
            g.values[i] += dt.values[i];
            if (inv_xi > 0.0) g.values[i] += inv_xi * (x.values[i] - a_prev[i]);
        }
        return g;
    }
};

}  // namespace detail

// x update of the a-ADMM: FISTA (restart on objective increase) or ISTA on
// h + alpha*M with the multi-bang prox, stopping on ||x_{l+1} - x_l|| <=
// delta1. Each step is x <- prox(x - t grad h(x); w = alpha t).
inline Image x_step(const AdmmState& state, const Image& a_prev, const Image& f, const Sinogram& d,
                    const SolverConfig& cfg, const TracedGeometry& tg) {
    const double w = cfg.alpha * cfg.t;
    const detail::XStepObjective obj{f, d, tg, state.y, state.mu, state.beta, cfg.inv_xi(),
                                     a_prev.values};
    Image x(a_prev.grid, state.x);
    Image z = x;  // extrapolation point
    double fx = obj.value(x) + cfg.alpha * multibang_penalty(x, cfg.admissible);
    if (!std::isfinite(fx)) throw solver_error("x_step: non-finite objective at start");
    double tk = 1.0;
    Image xnew(x.grid, 0.0);
    for (int it = 0; it < cfg.max_xstep; ++it) {
        const Image g = obj.gradient(z);
        for (size_t i = 0; i < xnew.values.size(); ++i)
            xnew.values[i] = multibang_prox(z.values[i] - cfg.t * g.values[i], cfg.admissible, w);
        const double fnew = obj.value(xnew) + cfg.alpha * multibang_penalty(xnew, cfg.admissible);
        if (!std::isfinite(fnew))
            throw solver_error("x_step: non-finite objective",
                               "iteration " + std::to_string(it));
        const double step_norm = vdist(xnew.values, x.values);
        const bool restart = cfg.use_fista && fnew > fx;
        if (cfg.use_fista && !restart) {
            // momentum on the accepted iterate; a restart drops the momentum
            // but keeps the prox step
            const double tnext = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            for (size_t i = 0; i < z.values.size(); ++i)
                z.values[i] = xnew.values[i] + (tk - 1.0) / tnext * (xnew.values[i] - x.values[i]);
            tk = tnext;
        } else {
            z = xnew;
            tk = 1.0;
        }
        x = xnew;
        fx = fnew;
        if (step_norm <= cfg.delta1) break;
    }
    return x;
}

// y update: for each pair y_i solve
//   0 = weight * y_i / sqrt(|y_i|^2 + c) - mu_i + beta (y_i - D_i x)
// by gradient descent with step 1/(beta + weight/sqrt(c)); closed form when
// the weight vanishes.
inline Vec y_step_weighted(const Vec& y_warm, const Vec& mu, double beta, const Vec& dx,
                           double weight, double c, double tol, int max_iters) {
    if (!(beta > 0.0)) throw std::invalid_argument("y_step: beta must be positive");
    Vec y = y_warm;
    if (weight == 0.0) {
        for (size_t i = 0; i < y.size(); ++i) y[i] = dx[i] + mu[i] / beta;
        return y;
    }
    const double step = 1.0 / (beta + weight / std::sqrt(c));
    for (size_t i = 0; i + 1 < y.size(); i += 2) {
        double y0 = y[i], y1 = y[i + 1];
        for (int it = 0; it < max_iters; ++it) {
            const double rad = std::sqrt(y0 * y0 + y1 * y1 + c);
            const double g0 = weight * y0 / rad - mu[i] + beta * (y0 - dx[i]);
            const double g1 = weight * y1 / rad - mu[i + 1] + beta * (y1 - dx[i + 1]);
            if (g0 * g0 + g1 * g1 <= tol * tol) break;
            y0 -= step * g0;
            y1 -= step * g1;
        }
        y[i] = y0;
        y[i + 1] = y1;
    }
    return y;
}

inline Vec y_step(const AdmmState& state, const Image& x, const SolverConfig& cfg) {
    return y_step_weighted(state.y, state.mu, state.beta, apply_D(x), cfg.lambda, cfg.c, cfg.y_tol,
                           cfg.max_y_iters);
}

struct AdmmResult {
    Image x;
    bool converged = false;
    int iterations = 0;
    double r = 0.0;
    double s_res = 0.0;
    double beta = 0.0;
};

// a update (Algorithm 1 inner loop): ADMM over (x, y, mu) with adaptive
// penalty, beta reset to beta0 at entry, mu started at zero. Terminates when
// r < delta2 and s < delta3; on hitting the cap returns the iterate with the
// best residual balance and a warning flag.
inline AdmmResult a_update(const Image& a_prev, const Image& f, const Sinogram& d,
                           const SolverConfig& cfg, const TracedGeometry& tg) {
    cfg.validate();
    AdmmState st;
    st.x = a_prev.values;
    st.y = apply_D(a_prev);
    st.mu.assign(st.y.size(), 0.0);
    st.beta = cfg.beta0;

    AdmmResult out;
    out.x = Image(a_prev.grid, a_prev.values);
    double best_score = std::numeric_limits<double>::infinity();

    for (int l = 0; l < cfg.max_inner; ++l) {
        const Image x = x_step(st, a_prev, f, d, cfg, tg);
        st.x = x.values;
        const Vec dx = apply_D(x);
        const Vec y_old = st.y;
        st.y = y_step_weighted(st.y, st.mu, st.beta, dx, cfg.lambda, cfg.c, cfg.y_tol, cfg.max_y_iters);

        // multiplier ascent for the constraint Dx - y = 0, the direction
        // consistent with the +mu^T Dx and -mu terms of the two subproblems
        Vec ydiff(st.y.size());
        double r2 = 0.0;
        for (size_t i = 0; i < st.y.size(); ++i) {
            const double resid = st.y[i] - dx[i];
            st.mu[i] -= st.beta * resid;
            r2 += resid * resid;
            ydiff[i] = st.beta * (st.y[i] - y_old[i]);
        }
        st.r = std::sqrt(r2);
        st.s_res = vnorm(apply_D_transpose(ydiff, a_prev.grid).values);

        out.iterations = l + 1;
        const double score = std::max(st.r / cfg.delta2, st.s_res / cfg.delta3);
        if (score < best_score) {
            best_score = score;
            out.x.values = st.x;
            out.r = st.r;
            out.s_res = st.s_res;
            out.beta = st.beta;
        }
        if (st.r < cfg.delta2 && st.s_res < cfg.delta3) {
            out.x.values = st.x;
            out.r = st.r;
            out.s_res = st.s_res;
            out.beta = st.beta;
            out.converged = true;
            return out;
        }
        st.beta = beta_update(st.r, st.s_res, st.beta, cfg);
    }
    return out;  // cap hit; warning flag is converged == false
}

inline AdmmResult a_update(const Image& a_prev, const Image& f, const Sinogram& d,
                           const SolverConfig& cfg) {
    return a_update(a_prev, f, d, cfg, trace_geometry(a_prev.grid, d.geometry));
}

namespace detail {

/// CG for s.p.d. operators given as a callable Vec -> Vec
template <class Op>
inline Vec conjugate_gradient(const Op& apply, const Vec& rhs, Vec x, double rel_tol, int max_iters) {
    Vec r = rhs;
    const Vec ax = apply(x);
    for (size_t i = 0; i < r.size(); ++i) r[i] -= ax[i];
    Vec p = r;
    double rr = vdot(r, r);
    const double stop = rel_tol * rel_tol * std::max(vdot(rhs, rhs), 1e-300);
    for (int it = 0; it < max_iters && rr > stop; ++it) {
        const Vec ap = apply(p);
        const double alpha = rr / std::max(vdot(p, ap), 1e-300);
        vaxpy(x, alpha, p);
        vaxpy(r, -alpha, ap);
        const double rr_new = vdot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    return x;
}

}  // namespace detail

/// least-squares source for fixed attenuation: CG on the ridge-stabilised
/// normal equations (R^T R + 1e-10 I) f = R^T d, tolerance delta4
inline Image least_squares_source(const Image& a, const Sinogram& d, const SolverConfig& cfg,
                                  const TracedGeometry& tg) {
    const SystemMatrix R = assemble_system_matrix(a, tg);
    const double ridge = 1e-10;
    const auto op = [&](const Vec& v) {
        Vec out = R.apply_transpose(R.apply(v));
        vaxpy(out, ridge, v);
        return out;
    };
    const Vec rhs = R.apply_transpose(d.d);
    Vec f0(static_cast<size_t>(a.grid.pixel_count()), 0.0);
    return Image(a.grid,
                 detail::conjugate_gradient(op, rhs, std::move(f0), cfg.delta4, 10 * cfg.max_cg));
}

struct FUpdateResult {
    Image f;
    bool converged = false;
    int iterations = 0;
    double stationarity = 0.0;
};

// f update: TV-regularised linear least squares with proximal coupling,
// solved by the same ADMM but with a quadratic x-step (CG). Terminates when
// the ADMM residuals meet delta2/delta3 and the exact first-order residual of
// the f-objective is below delta4 * (1 + ||f||).
inline FUpdateResult f_update(const Image& a, const Image& f_prev, const Sinogram& d,
                              const SolverConfig& cfg, const TracedGeometry& tg) {
    cfg.validate();
    const SystemMatrix R = assemble_system_matrix(a, tg);
    const double inv_xi = cfg.inv_xi();
    const PixelGrid grid = a.grid;
    const Vec rtd = R.apply_transpose(d.d);

    const auto stationarity = [&](const Vec& f) {
        Vec res = R.apply(f);
        for (size_t i = 0; i < res.size(); ++i) res[i] -= d.d[i];
        Vec g = R.apply_transpose(res);
        for (double& v : g) v *= 2.0;
        if (cfg.eta > 0.0) {
            const Image tvg = tv_gradient(Image(grid, f), cfg.c);
            vaxpy(g, cfg.eta, tvg.values);
        }
        if (inv_xi > 0.0)
            for (size_t i = 0; i < g.size(); ++i) g[i] += inv_xi * (f[i] - f_prev.values[i]);
        return vnorm(g);
    };

    Vec x = f_prev.values;
    Vec y = apply_D(f_prev);
    Vec mu(y.size(), 0.0);
    double beta = cfg.beta0;
    const double cg_tol = std::min(1e-8, 0.05 * cfg.delta4);

    FUpdateResult out;
    out.f = Image(grid, f_prev.values);
    for (int l = 0; l < cfg.max_inner; ++l) {
        // x-step: (2 R^T R + beta D^T D + 1/xi) x = 2 R^T d + D^T(beta y - mu) + f_prev/xi
        Vec lin(y.size());
        for (size_t i = 0; i < y.size(); ++i) lin[i] = beta * y[i] - mu[i];
        Vec rhs = apply_D_transpose(lin, grid).values;
        vaxpy(rhs, 2.0, rtd);
        if (inv_xi > 0.0) vaxpy(rhs, inv_xi, f_prev.values);
        const double beta_now = beta;
        const auto op = [&](const Vec& v) {
            Vec out_v = R.apply_transpose(R.apply(v));
            for (double& t : out_v) t *= 2.0;
            const Vec dtd = apply_D_transpose(apply_D(Image(grid, v)), grid).values;
            vaxpy(out_v, beta_now, dtd);
            if (inv_xi > 0.0) vaxpy(out_v, inv_xi, v);
            return out_v;
        };
        x = detail::conjugate_gradient(op, rhs, std::move(x), cg_tol, cfg.max_cg);
        if (cfg.project_f_nonneg)
            for (double& v : x) v = std::max(v, 0.0);

        const Vec dx = apply_D(Image(grid, x));
        const Vec y_old = y;
        y = y_step_weighted(y, mu, beta, dx, cfg.eta, cfg.c, cfg.y_tol, cfg.max_y_iters);

        Vec ydiff(y.size());
        double r2 = 0.0;
        for (size_t i = 0; i < y.size(); ++i) {
            const double resid = y[i] - dx[i];
            mu[i] -= beta * resid;
            r2 += resid * resid;
            ydiff[i] = beta * (y[i] - y_old[i]);
        }
        const double r = std::sqrt(r2);
        const double s_res = vnorm(apply_D_transpose(ydiff, grid).values);
        out.iterations = l + 1;
        if (r < cfg.delta2 && s_res < cfg.delta3) {
            const double st = stationarity(x);
            if (st <= cfg.delta4 * (1.0 + vnorm(x))) {
                out.f.values = x;
                out.stationarity = st;
                out.converged = true;
                return out;
            }
        }
        beta = beta_update(r, s_res, beta, cfg);
    }
    out.f.values = x;
    out.stationarity = stationarity(x);
    return out;
}

inline FUpdateResult f_update(const Image& a, const Image& f_prev, const Sinogram& d,
                              const SolverConfig& cfg) {
    return f_update(a, f_prev, d, cfg, trace_geometry(a.grid, d.geometry));
}

struct ReconHistoryRow {
    int k = 0;
    double objective = 0.0;
    double r = 0.0;
    double s_res = 0.0;
    double beta = 0.0;
    double mb_proportion = 0.0;
    double delta_a = 0.0;
    double delta_f = 0.0;
};

struct ReconState {
    Image a;
    Image f;
    int k = 0;
    std::vector<ReconHistoryRow> history;
    // objective after the a half-step and after the f half-step, coupling
    // terms included (monotonicity diagnostics)
    Vec half_step_objectives;
    bool a_converged = false;
    bool f_converged = false;
    bool objective_flagged = false;  // non-finite penalty replaced by sentinel
};

/// full variational objective ||R[a]f - d||^2 + alpha M(a) + lambda TV_c(a)
/// + eta TV_c(f); the multi-bang term is +inf outside [a_0, a_n]
inline double objective_value(const Image& a, const Image& f, const Sinogram& d,
                              const SolverConfig& cfg, const TracedGeometry& tg) {
    double fid = 0.0;
    for (size_t i = 0; i < tg.traces.size(); ++i) {
        const double res = atrt_ray_traced(a, f, tg.traces[i]) - d.d[i];
        fid += res * res;
    }
    return fid + cfg.alpha * multibang_penalty(a, cfg.admissible) + cfg.lambda * tv_smoothed(a, cfg.c) +
           cfg.eta * tv_smoothed(f, cfg.c);
}

inline constexpr double kObjectiveSentinel = 1e300;

// Algorithm 1: alternate a_update and f_update from a0 (f0 = least squares)
// until both iterate deltas drop below delta5 or the outer cap.
inline ReconState joint_reconstruct(const Sinogram& d, const SolverConfig& cfg, const Image& a0) {
    cfg.validate();
    for (double v : a0.values)
        if (v < cfg.admissible.lo() || v > cfg.admissible.hi())
            throw std::invalid_argument("joint_reconstruct: a0 outside [a_0, a_n]");

    const TracedGeometry tg = trace_geometry(a0.grid, d.geometry);
    ReconState st;
    st.a = a0;
    st.f = least_squares_source(a0, d, cfg, tg);

    for (int k = 0; k < cfg.max_outer; ++k) {
        const AdmmResult ares = a_update(st.a, st.f, d, cfg, tg);
        st.half_step_objectives.push_back(objective_value(ares.x, st.f, d, cfg, tg) +
                                          0.5 * cfg.inv_xi() * std::pow(vdist(ares.x.values, st.a.values), 2));
        const FUpdateResult fres = f_update(ares.x, st.f, d, cfg, tg);
        st.half_step_objectives.push_back(objective_value(ares.x, fres.f, d, cfg, tg) +
                                          0.5 * cfg.inv_xi() * std::pow(vdist(fres.f.values, st.f.values), 2));

        const double delta_a = vdist(ares.x.values, st.a.values);
        const double delta_f = vdist(fres.f.values, st.f.values);
        st.a = ares.x;
        st.f = fres.f;
        st.a_converged = ares.converged;
        st.f_converged = fres.converged;
        st.k = k + 1;

        double obj = objective_value(st.a, st.f, d, cfg, tg);
        if (std::isinf(obj)) {
            obj = kObjectiveSentinel;
            st.objective_flagged = true;
        }
        if (std::isnan(obj)) {
            throw solver_error("joint_reconstruct: non-finite objective",
                               "outer iteration " + std::to_string(k));
        }
        st.history.push_back({k, obj, ares.r, ares.s_res, ares.beta,
                              multibang_proportion(st.a, cfg.admissible, 1e-9), delta_a, delta_f});
        if (delta_a < cfg.delta5 && delta_f < cfg.delta5) break;
    }
    return st;
}

}  // namespace atrt
