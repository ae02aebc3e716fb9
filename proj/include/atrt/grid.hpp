#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace atrt {

using Vec = std::vector<double>;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }

// Square pixel grid centred at the origin, M pixels per side of width dx.
// Pixels are ordered lexicographically from the top-left corner, row-major.
// Internally indices are 0-based; pixel_index() exposes the 1-based
// lexicographic convention.
struct PixelGrid {
    int m = 0;
    double dx = 0.0;

    PixelGrid() = default;
    PixelGrid(int m_, double dx_) : m(m_), dx(dx_) {
        if (m <= 0 || !(dx > 0.0))
            throw std::invalid_argument("PixelGrid: need m > 0 and dx > 0");
    }

    int pixel_count() const { return m * m; }
    double half_extent() const { return 0.5 * m * dx; }

    // centre of pixel (row, col), 0-based, row 0 at the top
    Point2 center(int row, int col) const {
        const double h = half_extent();
        return {-h + (col + 0.5) * dx, h - (row + 0.5) * dx};
    }

    int linear(int row, int col) const { return row * m + col; }

    bool operator==(const PixelGrid& o) const { return m == o.m && dx == o.dx; }
};

/// 1-based lexicographic pixel index: (row-1)*M + col
inline int pixel_index(int row, int col, int m) {
    if (m <= 0) throw std::invalid_argument("pixel_index: m must be positive");
    if (row < 1 || row > m || col < 1 || col > m)
        throw std::invalid_argument("pixel_index: row/col out of range");
    return (row - 1) * m + col;
}

// Piecewise-constant image on a PixelGrid, values stored row-major.
struct Image {
    PixelGrid grid;
    Vec values;

    Image() = default;
    explicit Image(const PixelGrid& g, double fill = 0.0)
        : grid(g), values(static_cast<size_t>(g.pixel_count()), fill) {}
    Image(const PixelGrid& g, Vec v) : grid(g), values(std::move(v)) {
        if (static_cast<int>(values.size()) != grid.pixel_count())
            throw std::invalid_argument("Image: value count != M^2");
    }

    double& at(int row, int col) { return values[static_cast<size_t>(grid.linear(row, col))]; }
    double at(int row, int col) const { return values[static_cast<size_t>(grid.linear(row, col))]; }
    int side() const { return grid.m; }
};

// Oriented line: the point set { s*perp(omega) + t*theta(omega) } traversed in
// direction theta. (s, omega) and (-s, omega+pi) are the same line with
// opposite orientations and count as distinct rays.
struct Ray {
    double s = 0.0;
    double omega = 0.0;

    Point2 theta() const { return {std::cos(omega), std::sin(omega)}; }
    Point2 perp() const { return {-std::sin(omega), std::cos(omega)}; }
    Point2 point(double t) const {
        const Point2 th = theta();
        const Point2 pp = perp();
        return {s * pp.x + t * th.x, s * pp.y + t * th.y};
    }
    Ray reversed() const { return {-s, omega + 3.14159265358979323846}; }
};

// Exact ray/grid traversal record. K holds the intersection parameters in the
// ray's own arclength parameter (t = 0 at the closest approach to the
// origin), pixels holds 0-based linear indices in order of increasing t, and
// lengths[i] = K[i+1] - K[i]. A ray that misses the grid has all fields empty.
struct RayTrace {
    std::vector<int> pixels;
    Vec breakpoints;
    Vec lengths;

    size_t size() const { return pixels.size(); }
    bool empty() const { return pixels.empty(); }
};

namespace detail {

// Pixel index picker with the edge/vertex grazing rule: a midpoint lying
// exactly on a grid line is assigned to the pixel on the +perp side.
inline int pick_cell(double gridf, double perp_component, bool row_axis, int m) {
    const double nearest = std::nearbyint(gridf);
    long idx;
    if (std::abs(gridf - nearest) < 1e-9) {
        const long line = static_cast<long>(nearest);
        if (row_axis)
            idx = perp_component > 0.0 ? line - 1 : line;
        else
            idx = perp_component >= 0.0 ? line : line - 1;
    } else {
        idx = static_cast<long>(std::floor(gridf));
    }
    return static_cast<int>(std::clamp(idx, 0l, static_cast<long>(m - 1)));
}

}  // namespace detail

inline RayTrace trace_ray(const PixelGrid& grid, const Ray& ray) {
    RayTrace tr;
    const double h = grid.half_extent();
    const Point2 th = ray.theta();
    const Point2 pp = ray.perp();
    const Point2 p0{ray.s * pp.x, ray.s * pp.y};

    // clip against the grid square
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    const auto clip_axis = [&](double p, double d) -> bool {
        if (d != 0.0) {
            double a = (-h - p) / d;
            double b = (h - p) / d;
            if (a > b) std::swap(a, b);
            t_lo = std::max(t_lo, a);
            t_hi = std::min(t_hi, b);
            return true;
        }
        return -h <= p && p <= h;
    };
    if (!clip_axis(p0.x, th.x) || !clip_axis(p0.y, th.y)) return tr;
    const double tol = 1e-13 * std::max(1.0, 2.0 * h);
    if (!(t_hi - t_lo > tol)) return tr;

    // grid-line crossings of each family, in increasing t
    const auto crossings = [&](double p, double d, Vec& out) {
        if (d == 0.0) return;
        const int jlo = 0, jhi = grid.m;
        if (d > 0.0) {
            for (int j = jlo; j <= jhi; ++j) {
                const double t = ((-h + j * grid.dx) - p) / d;
                if (t > t_lo + tol && t < t_hi - tol) out.push_back(t);
            }
        } else {
            for (int j = jhi; j >= jlo; --j) {
                const double t = ((-h + j * grid.dx) - p) / d;
                if (t > t_lo + tol && t < t_hi - tol) out.push_back(t);
            }
        }
    };
    Vec cx, cy;
    cx.reserve(static_cast<size_t>(grid.m) + 1);
    cy.reserve(static_cast<size_t>(grid.m) + 1);
    crossings(p0.x, th.x, cx);
    crossings(p0.y, th.y, cy);

    Vec merged(cx.size() + cy.size());
    std::merge(cx.begin(), cx.end(), cy.begin(), cy.end(), merged.begin());

    Vec& ks = tr.breakpoints;
    ks.reserve(merged.size() + 2);
    ks.push_back(t_lo);
    for (double t : merged)
        if (t - ks.back() > tol) ks.push_back(t);
    if (t_hi - ks.back() > tol)
        ks.push_back(t_hi);
    else
        ks.back() = t_hi;  // absorb a trailing sliver so the sum telescopes
    if (ks.size() < 2) {
        ks.clear();
        return tr;
    }

    tr.pixels.reserve(ks.size() - 1);
    tr.lengths.reserve(ks.size() - 1);
    for (size_t i = 0; i + 1 < ks.size(); ++i) {
        const double tm = 0.5 * (ks[i] + ks[i + 1]);
        const Point2 p{p0.x + tm * th.x, p0.y + tm * th.y};
        const int col = detail::pick_cell((p.x + h) / grid.dx, pp.x, false, grid.m);
        const int row = detail::pick_cell((h - p.y) / grid.dx, pp.y, true, grid.m);
        tr.pixels.push_back(grid.linear(row, col));
        tr.lengths.push_back(ks[i + 1] - ks[i]);
    }
    return tr;
}

}  // namespace atrt
