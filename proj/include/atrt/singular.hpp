#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "atrt/extrap.hpp"
#include "atrt/grid.hpp"
#include "atrt/quad.hpp"
#include "atrt/source.hpp"

namespace atrt {

struct singularity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// convex shapes and nested phantoms
// ---------------------------------------------------------------------------

struct ConvexShape {
    // superdisk is the quartic ball x^4 + y^4 <= R^4, a smooth convex shape
    // whose boundary curvature vanishes at the four axis points; it is the
    // testbed for the zero-curvature tangency corollary
    enum class Kind { disk, polygon, superdisk };
    Kind kind = Kind::disk;
    Point2 center;
    double radius = 0.0;
    std::vector<Point2> vertices;  // CCW

    // negative inside; exact for interior points of disks and polygons
    // (what the nesting check needs), a sign-correct surrogate for superdisks
    double signed_distance(Point2 p) const {
        if (kind == Kind::disk) return norm(p - center) - radius;
        if (kind == Kind::superdisk) {
            const double u = p.x - center.x;
            const double v = p.y - center.y;
            return std::pow(u * u * u * u + v * v * v * v, 0.25) - radius;
        }
        double best = -std::numeric_limits<double>::infinity();
        const size_t n = vertices.size();
        for (size_t i = 0; i < n; ++i) {
            const Point2 a = vertices[i];
            const Point2 b = vertices[(i + 1) % n];
            const Point2 e = b - a;
            const double len = norm(e);
            const Point2 nrm{e.y / len, -e.x / len};  // outward for CCW
            best = std::max(best, dot(p - a, nrm));
        }
        return best;
    }

    bool contains(Point2 p) const { return signed_distance(p) < 0.0; }

    /// chord interval of the ray inside the shape; false when the ray misses
    bool intersect(const Ray& ray, double& t0, double& t1) const {
        const Point2 th = ray.theta();
        const Point2 p0 = ray.point(0.0);
        if (kind == Kind::disk) {
            const Point2 rel = center - p0;
            const double tc = dot(rel, th);
            const double d2 = dot(rel, rel) - tc * tc;
            const double r2 = radius * radius;
            if (d2 >= r2) return false;
            const double half = std::sqrt(r2 - d2);
            t0 = tc - half;
            t1 = tc + half;
            return true;
        }
        if (kind == Kind::superdisk) {
            // g(t) = u(t)^4 + v(t)^4 - R^4 is convex in t: locate its minimum
            // by ternary search, then bisect outward for the two roots
            const auto g = [&](double t) {
                const double u = p0.x + t * th.x - center.x;
                const double v = p0.y + t * th.y - center.y;
                return u * u * u * u + v * v * v * v - radius * radius * radius * radius;
            };
            const Point2 rel = center - p0;
            const double tc = dot(rel, th);
            const double reach = 4.0 * radius + norm(rel);
            double lo = tc - reach, hi = tc + reach;
            for (int it = 0; it < 200; ++it) {
                const double m1 = lo + (hi - lo) / 3.0;
                const double m2 = hi - (hi - lo) / 3.0;
                if (g(m1) < g(m2))
                    hi = m2;
                else
                    lo = m1;
            }
            const double tmin = 0.5 * (lo + hi);
            if (!(g(tmin) < 0.0)) return false;
            const auto bisect = [&](double inside, double outside) {
                for (int it = 0; it < 120; ++it) {
                    const double mid = 0.5 * (inside + outside);
                    (g(mid) < 0.0 ? inside : outside) = mid;
                }
                return 0.5 * (inside + outside);
            };
            t0 = bisect(tmin, tc - reach);
            t1 = bisect(tmin, tc + reach);
            if (t0 > t1) std::swap(t0, t1);
            return true;
        }
        t0 = -std::numeric_limits<double>::infinity();
        t1 = std::numeric_limits<double>::infinity();
        const size_t n = vertices.size();
        for (size_t i = 0; i < n; ++i) {
            const Point2 a = vertices[i];
            const Point2 e = vertices[(i + 1) % n] - a;
            const double len = norm(e);
            const Point2 nrm{e.y / len, -e.x / len};
            const double num = dot(p0 - a, nrm);
            const double den = dot(th, nrm);
            if (den > 0.0)
                t1 = std::min(t1, -num / den);
            else if (den < 0.0)
                t0 = std::max(t0, -num / den);
            else if (num > 0.0)
                return false;
        }
        return t0 < t1;
    }
};

inline ConvexShape make_disk(Point2 center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("make_disk: radius must be positive");
    ConvexShape s;
    s.kind = ConvexShape::Kind::disk;
    s.center = center;
    s.radius = radius;
    return s;
}

inline ConvexShape make_superdisk(Point2 center, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("make_superdisk: radius must be positive");
    ConvexShape s;
    s.kind = ConvexShape::Kind::superdisk;
    s.center = center;
    s.radius = radius;
    return s;
}

inline ConvexShape make_polygon(std::vector<Point2> verts) {
    if (verts.size() < 3) throw std::invalid_argument("make_polygon: need at least 3 vertices");
    // signed area; flip to CCW if needed
    double area2 = 0.0;
    for (size_t i = 0; i < verts.size(); ++i) {
        const Point2 a = verts[i];
        const Point2 b = verts[(i + 1) % verts.size()];
        area2 += a.x * b.y - a.y * b.x;
    }
    if (area2 < 0.0) std::reverse(verts.begin(), verts.end());
    for (size_t i = 0; i < verts.size(); ++i) {
        const Point2 a = verts[i];
        const Point2 b = verts[(i + 1) % verts.size()];
        const Point2 c = verts[(i + 2) % verts.size()];
        const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (!(cross > 0.0))
            throw std::invalid_argument("make_polygon: vertices must be in strictly convex position");
    }
    ConvexShape s;
    s.kind = ConvexShape::Kind::polygon;
    s.vertices = std::move(verts);
    return s;
}

// Nicely multi-bang attenuation a = sum_j c_j chi_{C_j} over strictly nested
// convex sets C_1 .. C_n (outermost first). increments[j] is the jump c_j
// across boundary j, so the value inside C_j is the partial sum.
struct NestedConvexPhantom {
    std::vector<ConvexShape> sets;
    Vec increments;

    NestedConvexPhantom() = default;
    NestedConvexPhantom(std::vector<ConvexShape> ss, Vec cs) : sets(std::move(ss)), increments(std::move(cs)) {
        if (sets.size() != increments.size())
            throw std::invalid_argument("NestedConvexPhantom: one increment per set");
        constexpr double margin = 1e-6;
        for (size_t j = 1; j < sets.size(); ++j) {
            const ConvexShape& inner = sets[j];
            const ConvexShape& outer = sets[j - 1];
            double worst;
            if (inner.kind == ConvexShape::Kind::disk) {
                worst = outer.signed_distance(inner.center) + inner.radius;
            } else if (inner.kind == ConvexShape::Kind::superdisk) {
                worst = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < 256; ++k) {
                    const double phi = 2.0 * 3.14159265358979323846 * k / 256.0;
                    const double cs = std::cos(phi), sn = std::sin(phi);
                    const double rr = inner.radius / std::pow(cs * cs * cs * cs + sn * sn * sn * sn, 0.25);
                    worst = std::max(worst, outer.signed_distance(
                                                {inner.center.x + rr * cs, inner.center.y + rr * sn}));
                }
            } else {
                worst = -std::numeric_limits<double>::infinity();
                for (const Point2& v : inner.vertices) worst = std::max(worst, outer.signed_distance(v));
            }
            if (!(worst <= -margin))
                throw std::invalid_argument("NestedConvexPhantom: sets not strictly nested");
        }
    }

    double attenuation(Point2 p) const {
        double a = 0.0;
        for (size_t j = 0; j < sets.size(); ++j)
            if (sets[j].contains(p)) a += increments[j];
        return a;
    }

    double scale() const {
        double s = 1.0;
        for (const auto& sh : sets) {
            if (sh.kind == ConvexShape::Kind::disk)
                s = std::max(s, norm(sh.center) + sh.radius);
            else
                for (const Point2& v : sh.vertices) s = std::max(s, norm(v));
        }
        return s;
    }
};

// ---------------------------------------------------------------------------
// grid-free AtRT oracle
// ---------------------------------------------------------------------------

namespace detail {

// chord intervals of all phantom sets along a ray, for closed-form
// accumulation of the downstream beam transform
struct LineAttenuation {
    std::vector<double> t_in, t_out, inc;

    double downstream(double t) const {
        double acc = 0.0;
        for (size_t j = 0; j < t_in.size(); ++j) {
            const double lo = std::max(t, t_in[j]);
            if (lo < t_out[j]) acc += inc[j] * (t_out[j] - lo);
        }
        return acc;
    }
};

inline LineAttenuation line_attenuation(const NestedConvexPhantom& ph, const Ray& ray) {
    LineAttenuation la;
    for (size_t j = 0; j < ph.sets.size(); ++j) {
        double t0, t1;
        if (ph.sets[j].intersect(ray, t0, t1)) {
            la.t_in.push_back(t0);
            la.t_out.push_back(t1);
            la.inc.push_back(ph.increments[j]);
        }
    }
    return la;
}

}  // namespace detail

inline constexpr double kOracleTol = 1e-10;

// R_a f along one ray, integrating f * exp(-Da) with Da accumulated in
// closed form; `upper` truncates the integral at a t-parameter (used for the
// one-sided integrals in the jump/coefficient formulas). Absolute accuracy
// 1e-10 * (1 + |result|).
template <class SourceFn>
inline double analytic_atrt_fn(const NestedConvexPhantom& ph, const SourceFn& f, Vec source_breaks,
                               const Ray& ray,
                               double upper = std::numeric_limits<double>::infinity(),
                               double tol_scale = 1.0) {
    if (source_breaks.empty()) return 0.0;
    const detail::LineAttenuation la = detail::line_attenuation(ph, ray);

    Vec breaks = std::move(source_breaks);
    std::sort(breaks.begin(), breaks.end());
    const double lo = breaks.front();
    const double hi = std::min(breaks.back(), upper);
    if (!(hi > lo)) return 0.0;
    for (double t : la.t_in) breaks.push_back(t);
    for (double t : la.t_out) breaks.push_back(t);
    std::sort(breaks.begin(), breaks.end());

    Vec panels{lo};
    for (double t : breaks)
        if (t > panels.back() + 1e-14 && t < hi - 1e-14) panels.push_back(t);
    panels.push_back(hi);

    const auto integrand = [&](double t) { return f(ray, t) * std::exp(-la.downstream(t)); };

    double rough = 0.0;
    for (size_t i = 0; i + 1 < panels.size(); ++i) {
        double k, g;
        detail::gk15(integrand, panels[i], panels[i + 1], k, g);
        rough += std::abs(k);
    }
    const double tol =
        0.1 * tol_scale * kOracleTol * (1.0 + rough) / static_cast<double>(panels.size() - 1);
    double total = 0.0;
    for (size_t i = 0; i + 1 < panels.size(); ++i)
        total += integrate(integrand, panels[i], panels[i + 1], tol);
    return total;
}

inline double analytic_atrt(const NestedConvexPhantom& ph, const SmoothSource& src, const Ray& ray,
                            double upper = std::numeric_limits<double>::infinity(),
                            double tol_scale = 1.0) {
    return analytic_atrt_fn(
        ph, [&](const Ray& r, double t) { return src.eval_on_ray(r, t); }, src.support_breaks(ray),
        ray, upper, tol_scale);
}

// ---------------------------------------------------------------------------
// derivative scans
// ---------------------------------------------------------------------------

struct DerivativeScan {
    enum class Axis { s, omega };
    Axis axis = Axis::s;
    Ray anchor;
    Point2 pivot;   // omega scans rotate the line about this point
    Vec offsets;    // signed, symmetric about 0, 0 excluded, ascending
    Vec values;     // derivative samples at anchor + offset
};

/// Samples d/ds R_a f(s* + offset, omega*) on a dyadic two-sided ladder of
/// n/2 offsets per side, central differences with step <= half_width/(10 n).
inline DerivativeScan ds_scan(const NestedConvexPhantom& ph, const SmoothSource& src, double s_star,
                              double omega_star, double half_width, int n) {
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("ds_scan: need even n >= 8");
    if (!(half_width > 0.0)) throw std::invalid_argument("ds_scan: need half_width > 0");
    DerivativeScan scan;
    scan.axis = DerivativeScan::Axis::s;
    scan.anchor = Ray{s_star, omega_star};
    const int rungs = n / 2;
    Vec mags(static_cast<size_t>(rungs));
    for (int k = 0; k < rungs; ++k) mags[static_cast<size_t>(k)] = half_width * std::pow(2.0, -k);
    const double global_step = half_width / (10.0 * n);
    const auto deriv = [&](double s) {
        const double h = std::min(global_step, 0.25 * std::abs(s - s_star));
        const double rp = analytic_atrt(ph, src, Ray{s + h, omega_star});
        const double rm = analytic_atrt(ph, src, Ray{s - h, omega_star});
        return (rp - rm) / (2.0 * h);
    };
    for (int k = 0; k < rungs; ++k) {  // negative side, ascending offsets
        const double d = mags[static_cast<size_t>(k)];
        scan.offsets.push_back(-d);
        scan.values.push_back(deriv(s_star - d));
    }
    for (int k = rungs - 1; k >= 0; --k) {
        const double d = mags[static_cast<size_t>(k)];
        scan.offsets.push_back(d);
        scan.values.push_back(deriv(s_star + d));
    }
    return scan;
}

/// Samples d/domega R_a f over the pencil of lines through `pivot`; the line
/// at angle omega is (pivot . perp(omega), omega).
inline DerivativeScan omega_scan(const NestedConvexPhantom& ph, const SmoothSource& src, Point2 pivot,
                                 double omega_star, double half_width, int n) {
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("omega_scan: need even n >= 8");
    DerivativeScan scan;
    scan.axis = DerivativeScan::Axis::omega;
    scan.pivot = pivot;
    const auto line_at = [&](double w) {
        const Point2 pp{-std::sin(w), std::cos(w)};
        return Ray{pivot.x * pp.x + pivot.y * pp.y, w};
    };
    scan.anchor = line_at(omega_star);
    const int rungs = n / 2;
    const double global_step = half_width / (10.0 * n);
    const auto deriv = [&](double w) {
        const double h = std::min(global_step, 0.25 * std::abs(w - omega_star));
        const double rp = analytic_atrt(ph, src, line_at(w + h));
        const double rm = analytic_atrt(ph, src, line_at(w - h));
        return (rp - rm) / (2.0 * h);
    };
    for (int k = 0; k < rungs; ++k) {
        const double d = half_width * std::pow(2.0, -k);
        scan.offsets.push_back(-d);
        scan.values.push_back(deriv(omega_star - d));
    }
    for (int k = rungs - 1; k >= 0; --k) {
        const double d = half_width * std::pow(2.0, -k);
        scan.offsets.push_back(d);
        scan.values.push_back(deriv(omega_star + d));
    }
    return scan;
}

namespace detail {

/// one side of a scan as (magnitudes ascending, values)
inline void scan_side(const DerivativeScan& scan, int side, Vec& mags, Vec& vals) {
    mags.clear();
    vals.clear();
    for (size_t i = 0; i < scan.offsets.size(); ++i) {
        if ((side > 0 && scan.offsets[i] > 0.0) || (side < 0 && scan.offsets[i] < 0.0)) {
            mags.push_back(std::abs(scan.offsets[i]));
            vals.push_back(scan.values[i]);
        }
    }
    // ascending magnitude
    std::vector<size_t> idx(mags.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return mags[a] < mags[b]; });
    Vec m2(mags.size()), v2(vals.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        m2[i] = mags[idx[i]];
        v2[i] = vals[idx[i]];
    }
    mags.swap(m2);
    vals.swap(v2);
}

}  // namespace detail

/// log-log slope of |scan values| vs offset magnitude on one side; -1/2 for
/// a tangent ray, near 0 for a bounded derivative
inline double scan_exponent(const DerivativeScan& scan, int side) {
    Vec mags, vals;
    detail::scan_side(scan, side, mags, vals);
    return fit_power_law(mags, vals).exponent;
}

/// Richardson-extrapolated one-sided limit of the scanned derivative
inline double scan_limit(const DerivativeScan& scan, int side) {
    Vec mags, vals;
    detail::scan_side(scan, side, mags, vals);
    return extrapolate_to_zero(mags, vals);
}

// Exponent of the singular part: the bounded background is continuous across
// the anchor, so the opposite side's extrapolated limit is subtracted before
// the log-log fit. Without the subtraction an O(1) background biases the
// fitted slope noticeably.
inline double tangent_exponent(const DerivativeScan& scan, int side) {
    Vec mags, vals;
    detail::scan_side(scan, side, mags, vals);
    const double background = scan_limit(scan, -side);
    Vec sub(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) sub[i] = vals[i] - background;
    return fit_power_law(mags, sub).exponent;
}

// ---------------------------------------------------------------------------
// corner rays (bounded jump in d/ds R_a f)
// ---------------------------------------------------------------------------

/// Richardson-extrapolated difference of the one-sided limits of a ds scan.
/// Flags blow-up (tangency) as a hypothesis violation.
inline double measure_corner_jump(const DerivativeScan& scan) {
    for (int side : {-1, +1}) {
        const double p = scan_exponent(scan, side);
        if (p < -0.25)
            throw singularity_error("measure_corner_jump: power-law growth detected (tangency?)");
    }
    Vec mags, vals;
    detail::scan_side(scan, +1, mags, vals);
    const double plus = extrapolate_to_zero(mags, vals);
    detail::scan_side(scan, -1, mags, vals);
    const double minus = extrapolate_to_zero(mags, vals);
    return plus - minus;
}

namespace detail {

inline Point2 frame_dir(const Ray& ray, double alpha) {
    const Point2 th = ray.theta();
    const Point2 pp = ray.perp();
    return {std::cos(alpha) * pp.x + std::sin(alpha) * th.x,
            std::cos(alpha) * pp.y + std::sin(alpha) * th.y};
}

}  // namespace detail

// Predicted jump of eq-corner type: (sum_k b_k tan(alpha_k)) * I where the
// branch angles alpha_k are measured from theta_perp with theta at +pi/2,
// b_k is the jump of a across branch k in the direction of increasing angle,
// and I integrates f e^{-Da} upstream of the corner.
inline double predict_corner_jump(const NestedConvexPhantom& ph, const SmoothSource& src,
                                  Point2 corner, const Ray& ray) {
    const Point2 th = ray.theta();
    const Point2 pp = ray.perp();
    const double scale = ph.scale();
    const double vertex_tol = 1e-9 * scale;

    // collect outgoing boundary branch directions at the corner
    std::vector<Point2> branches;
    for (const auto& shape : ph.sets) {
        if (shape.kind != ConvexShape::Kind::polygon) continue;
        const size_t n = shape.vertices.size();
        for (size_t i = 0; i < n; ++i) {
            if (norm(shape.vertices[i] - corner) < vertex_tol) {
                const Point2 prev = shape.vertices[(i + n - 1) % n];
                const Point2 next = shape.vertices[(i + 1) % n];
                for (Point2 dir : {prev - corner, next - corner}) {
                    const double len = norm(dir);
                    branches.push_back({dir.x / len, dir.y / len});
                }
            }
        }
    }
    if (branches.empty())
        throw singularity_error("predict_corner_jump: no polygon vertex at the given point");

    const double r = 1e-7 * scale;
    const double eps = 1e-4;
    double factor = 0.0;
    for (const Point2& d : branches) {
        const double along = dot(d, th);
        const double across = dot(d, pp);
        const double alpha = std::atan2(along, across);
        if (std::abs(across) < 1e-12)
            throw singularity_error("predict_corner_jump: ray tangent to a branch");
        const Point2 p_above = corner + r * detail::frame_dir(ray, alpha + eps);
        const Point2 p_below = corner + r * detail::frame_dir(ray, alpha - eps);
        const double b = ph.attenuation(p_above) - ph.attenuation(p_below);
        factor += b * std::tan(alpha);
    }
    const double t_star = dot(corner, th);
    return factor * analytic_atrt(ph, src, ray, t_star);
}

// ---------------------------------------------------------------------------
// tangent rays (half-order singularity of d/ds R_a f)
// ---------------------------------------------------------------------------

/// limit of |offset|^{1/2} * d/ds R on one side of the scan, via the
/// intercept of a fit with sqrt correction. Flags the side as violating the
/// half-order hypothesis when its log-log exponent strays from -1/2 by more
/// than 0.1 (only for the singular side; the regular side fits near zero).
inline double measure_tangent_coefficient(const DerivativeScan& scan, int side) {
    Vec mags, vals;
    detail::scan_side(scan, side, mags, vals);
    Vec weighted(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) weighted[i] = std::sqrt(mags[i]) * vals[i];
    const double limit = fit_intercept_sqrt(mags, weighted);
    const double p = tangent_exponent(scan, side);
    if (p < -0.25 && std::abs(p + 0.5) > 0.1)
        throw singularity_error("measure_tangent_coefficient: exponent far from -1/2");
    return limit;
}

struct TangentPrediction {
    double coefficient = 0.0;  // signed limit on the singular side
    int singular_side = +1;    // sign of (theta)^perp . theta_perp
    double curvature = 0.0;
    double upstream_integral = 0.0;
};

// eq-tangent prediction at a disk tangency: +-(c0 - c)/sqrt(kappa/2) * I with
// c the value on the convex side, c0 on the concave side, kappa the boundary
// curvature, and the sign that of (theta)^perp . theta_perp where theta_perp
// points into the convex side.
inline TangentPrediction predict_tangent_coefficient(const NestedConvexPhantom& ph,
                                                     const SmoothSource& src, Point2 tangency,
                                                     const Ray& ray) {
    const double scale = ph.scale();
    const ConvexShape* shape = nullptr;
    for (const auto& s : ph.sets) {
        if (s.kind != ConvexShape::Kind::disk) continue;
        if (std::abs(norm(tangency - s.center) - s.radius) < 1e-7 * scale) {
            shape = &s;
            break;
        }
    }
    if (!shape)
        throw singularity_error("predict_tangent_coefficient: no disk boundary at the given point");

    const double kappa = 1.0 / shape->radius;
    Point2 into_convex = shape->center - tangency;  // into the disk
    const double len = norm(into_convex);
    into_convex = {into_convex.x / len, into_convex.y / len};

    const double eps = 1e-7 * scale;
    const double c_convex = ph.attenuation(tangency + eps * into_convex);
    const double c_concave = ph.attenuation(tangency - eps * into_convex);

    const double orient = dot(ray.perp(), into_convex);
    const int side = orient >= 0.0 ? +1 : -1;

    TangentPrediction out;
    out.curvature = kappa;
    out.singular_side = side;
    out.upstream_integral = analytic_atrt(ph, src, ray, dot(tangency, ray.theta()));
    out.coefficient =
        side * (c_concave - c_convex) / std::sqrt(0.5 * kappa) * out.upstream_integral;
    return out;
}

// ---------------------------------------------------------------------------
// tangency-point localisation along a tangent line (eq-omega)
// ---------------------------------------------------------------------------

struct TangencyLocation {
    Point2 point;
    Vec scores;  // weighted omega-limit magnitude per candidate
};

// The tangency point is the unique pivot on the line where the weighted
// omega-derivative limit vanishes. Scores candidates by the larger of the
// two one-sided sqrt-weighted limit estimates.
inline TangencyLocation locate_tangency_point(const NestedConvexPhantom& ph, const SmoothSource& src,
                                              const Ray& ray, const std::vector<Point2>& candidates,
                                              double omega_half_width = 2e-3, int n = 10,
                                              double min_score = 1e-3) {
    if (candidates.size() < 3)
        throw std::invalid_argument("locate_tangency_point: need at least 3 candidates");
    TangencyLocation out;
    out.scores.reserve(candidates.size());
    for (const Point2& cand : candidates) {
        const DerivativeScan scan = omega_scan(ph, src, cand, ray.omega, omega_half_width, n);
        Vec mags, vals;
        double score = 0.0;
        for (int side : {-1, +1}) {
            detail::scan_side(scan, side, mags, vals);
            Vec weighted(vals.size());
            for (size_t i = 0; i < vals.size(); ++i)
                weighted[i] = std::sqrt(std::abs(std::sin(mags[i]))) * vals[i];
            score = std::max(score, std::abs(fit_intercept_sqrt(mags, weighted)));
        }
        out.scores.push_back(score);
    }
    double lo = out.scores[0], hi = out.scores[0];
    size_t best = 0;
    for (size_t i = 1; i < out.scores.size(); ++i) {
        if (out.scores[i] < lo) {
            lo = out.scores[i];
            best = i;
        }
        hi = std::max(hi, out.scores[i]);
    }
    if (hi < min_score || !(hi > 5.0 * lo + 1e-12))
        throw singularity_error("locate_tangency_point: candidates are degenerate");
    out.point = candidates[best];
    return out;
}

// ---------------------------------------------------------------------------
// flat boundary segments (jump of R_a f itself)
// ---------------------------------------------------------------------------

/// true when the one-sided limits of R_a f across s* differ by more than
/// ten times the quadrature tolerance. The limits are extrapolated in
/// sqrt(offset) (tangent rays give R one-sided half-power behaviour) and the
/// oracle runs two digits tighter than its documented tolerance so the
/// threshold stays meaningful.
inline bool detect_flat_segment(const NestedConvexPhantom& ph, const SmoothSource& src,
                                const Ray& ray) {
    const double scale = ph.scale();
    const int rungs = 6;
    Vec mags(rungs);
    for (int k = 0; k < rungs; ++k) mags[static_cast<size_t>(k)] = 3.2e-3 * scale * std::pow(2.0, -k);
    std::sort(mags.begin(), mags.end());
    Vec u(rungs), vp(rungs), vm(rungs);
    double vmax = 0.0;
    for (int k = 0; k < rungs; ++k) {
        const size_t ks = static_cast<size_t>(k);
        u[ks] = std::sqrt(mags[ks]);
        vp[ks] = analytic_atrt(ph, src, Ray{ray.s + mags[ks], ray.omega},
                               std::numeric_limits<double>::infinity(), 1e-2);
        vm[ks] = analytic_atrt(ph, src, Ray{ray.s - mags[ks], ray.omega},
                               std::numeric_limits<double>::infinity(), 1e-2);
        vmax = std::max({vmax, std::abs(vp[ks]), std::abs(vm[ks])});
    }
    const double jump = std::abs(extrapolate_to_zero(u, vp) - extrapolate_to_zero(u, vm));
    return jump > 10.0 * kOracleTol * (1.0 + vmax);
}

// ---------------------------------------------------------------------------
// ray classification (Lemma 1/2/3 trichotomy plus flat segments)
// ---------------------------------------------------------------------------

enum class RayClass { regular, corner, tangent, flat };

inline const char* to_string(RayClass c) {
    switch (c) {
        case RayClass::regular: return "regular";
        case RayClass::corner: return "corner";
        case RayClass::tangent: return "tangent";
        case RayClass::flat: return "flat";
    }
    return "?";
}

inline RayClass classify_ray(const NestedConvexPhantom& ph, const SmoothSource& src, const Ray& ray,
                             double jump_tol = 1e-4) {
    if (detect_flat_segment(ph, src, ray)) return RayClass::flat;
    const double scale = ph.scale();
    const DerivativeScan scan = ds_scan(ph, src, ray.s, ray.omega, 3.2e-4 * scale, 12);
    Vec mags, vals;
    for (int side : {-1, +1}) {
        detail::scan_side(scan, side, mags, vals);
        const double bg = scan_limit(scan, -side);
        Vec sub(vals.size());
        for (size_t i = 0; i < vals.size(); ++i) sub[i] = vals[i] - bg;
        const PowerFit pf = fit_power_law(mags, sub);
        if (pf.exponent < -0.25 && std::abs(sub.front()) > 1e-3 * (1.0 + std::abs(bg)))
            return RayClass::tangent;
    }
    const double jump = scan_limit(scan, +1) - scan_limit(scan, -1);
    if (std::abs(jump) > jump_tol) return RayClass::corner;
    return RayClass::regular;
}

// ---------------------------------------------------------------------------
// hull peeling and nested boundary recovery
// ---------------------------------------------------------------------------

inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const size_t n = pts.size();
    if (n < 3) return pts;
    const auto cross = [](Point2 o, Point2 a, Point2 b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Point2> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline double distance_to_hull_boundary(Point2 p, const std::vector<Point2>& hull) {
    double best = std::numeric_limits<double>::infinity();
    const size_t n = hull.size();
    for (size_t i = 0; i < n; ++i) {
        const Point2 a = hull[i];
        const Point2 b = hull[(i + 1) % n];
        const Point2 e = b - a;
        const double len2 = dot(e, e);
        double t = len2 > 0.0 ? dot(p - a, e) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        best = std::min(best, norm(p - (a + t * e)));
    }
    return best;
}

/// Repeatedly assigns the points lying on the current convex hull boundary
/// (within `band`) to one recovered set, removes them and recurses inward.
inline std::vector<std::vector<Point2>> peel_hulls(std::vector<Point2> points, double band,
                                                   size_t min_points = 5) {
    std::vector<std::vector<Point2>> sets;
    while (!points.empty()) {
        const std::vector<Point2> hull = convex_hull(points);
        std::vector<Point2> on_hull, rest;
        for (const Point2& p : points) {
            if (distance_to_hull_boundary(p, hull) <= band)
                on_hull.push_back(p);
            else
                rest.push_back(p);
        }
        if (on_hull.size() < min_points)
            throw singularity_error("peel_hulls: fewer points than required per set");
        sets.push_back(std::move(on_hull));
        points = std::move(rest);
    }
    return sets;
}

struct CircleFit {
    Point2 center;
    double radius = 0.0;
};

/// algebraic (Kasa) circle fit
inline CircleFit fit_circle(const std::vector<Point2>& pts) {
    if (pts.size() < 3) throw std::invalid_argument("fit_circle: need at least 3 points");
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, sxz = 0, syz = 0, sz = 0;
    for (const Point2& p : pts) {
        const double z = p.x * p.x + p.y * p.y;
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        syy += p.y * p.y;
        sxy += p.x * p.y;
        sxz += p.x * z;
        syz += p.y * z;
        sz += z;
    }
    const double n = static_cast<double>(pts.size());
    // solve [sxx sxy sx; sxy syy sy; sx sy n] [A B C]' = [sxz; syz; sz]
    double m[3][4] = {{sxx, sxy, sx, sxz}, {sxy, syy, sy, syz}, {sx, sy, n, sz}};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        std::swap(m[piv], m[col]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double fac = m[r][col] / m[col][col];
            for (int cc = col; cc < 4; ++cc) m[r][cc] -= fac * m[col][cc];
        }
    }
    const double A = m[0][3] / m[0][0];
    const double B = m[1][3] / m[1][1];
    const double C = m[2][3] / m[2][2];
    CircleFit out;
    out.center = {0.5 * A, 0.5 * B};
    out.radius = std::sqrt(C + out.center.x * out.center.x + out.center.y * out.center.y);
    return out;
}

struct RecoveryOptions {
    double spike_factor = 8.0;        // second-difference threshold over the median
    double spike_max_frac = 0.02;     // and over the per-angle maximum
    double peel_band_rel = 0.02;      // hull membership band, relative to scale
    double candidate_spacing_rel = 0.01;
    size_t min_points_per_set = 5;
    int refine_rounds = 7;
};

namespace detail {

// refine a tangent-line offset by maximising the second difference of
// R(s) with a shrinking probe step
inline double refine_tangent_offset(const NestedConvexPhantom& ph, const SmoothSource& src,
                                    double omega, double s_lo, double s_hi, int rounds) {
    const auto rval = [&](double s) { return analytic_atrt(ph, src, Ray{s, omega}); };
    double lo = s_lo, hi = s_hi;
    for (int round = 0; round < rounds; ++round) {
        const double w = hi - lo;
        const double h = 0.25 * w;
        double best_s = lo, best_e = -1.0;
        for (int i = 0; i <= 8; ++i) {
            const double s = lo + w * i / 8.0;
            const double e = std::abs(rval(s + h) - 2.0 * rval(s) + rval(s - h));
            if (e > best_e) {
                best_e = e;
                best_s = s;
            }
        }
        lo = best_s - 0.25 * w;
        hi = best_s + 0.25 * w;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Boundary recovery from sinogram singularities alone: sweep the (s, omega)
// grid for blow-up signatures, refine each tangent line, locate the tangency
// point via the weighted omega limit, then peel convex hulls.
inline std::vector<std::vector<Point2>> recover_nested_boundaries(
    const NestedConvexPhantom& ph, const SmoothSource& src, const Vec& s_grid, const Vec& omega_grid,
    const RecoveryOptions& opt = {}) {
    if (s_grid.size() < 8 || omega_grid.empty())
        throw std::invalid_argument("recover_nested_boundaries: scan grids too small");
    const double scale = ph.scale();
    std::vector<Point2> points;

    for (double omega : omega_grid) {
        Vec r(s_grid.size());
        for (size_t j = 0; j < s_grid.size(); ++j)
            r[j] = analytic_atrt(ph, src, Ray{s_grid[j], omega});
        Vec e(s_grid.size(), 0.0);
        Vec sorted;
        double emax = 0.0;
        for (size_t j = 1; j + 1 < s_grid.size(); ++j) {
            e[j] = std::abs(r[j + 1] - 2.0 * r[j] + r[j - 1]);
            sorted.push_back(e[j]);
            emax = std::max(emax, e[j]);
        }
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[sorted.size() / 2];
        const double thresh = std::max(opt.spike_factor * (med + 1e-12), opt.spike_max_frac * emax);

        // clusters of consecutive above-threshold samples -> candidate lines
        size_t j = 1;
        while (j + 1 < s_grid.size()) {
            if (e[j] <= thresh) {
                ++j;
                continue;
            }
            size_t j0 = j;
            size_t jpk = j;
            while (j + 1 < s_grid.size() && e[j] > thresh) {
                if (e[j] > e[jpk]) jpk = j;
                ++j;
            }
            (void)j0;
            const double s_star = detail::refine_tangent_offset(
                ph, src, omega, s_grid[jpk - 1], s_grid[jpk + 1], opt.refine_rounds);

            // candidates along the refined line
            const Ray line{s_star, omega};
            const double spacing = opt.candidate_spacing_rel * scale;
            std::vector<Point2> cands;
            for (double t = -scale; t <= scale + 0.5 * spacing; t += spacing)
                cands.push_back(line.point(t));
            try {
                points.push_back(locate_tangency_point(ph, src, line, cands).point);
            } catch (const singularity_error&) {
                // skip lines whose omega scan is degenerate (e.g. grazing f support)
            }
        }
    }

    return peel_hulls(points, opt.peel_band_rel * scale, opt.min_points_per_set);
}

}  // namespace atrt
