#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "atrt/grid.hpp"

namespace atrt {

// Known attenuation levels a_0 < a_1 < ... < a_n.
struct AdmissibleSet {
    Vec levels;

    AdmissibleSet() = default;
    explicit AdmissibleSet(Vec lv) : levels(std::move(lv)) {
        if (levels.size() < 2) throw std::invalid_argument("AdmissibleSet: need at least two levels");
        for (size_t i = 0; i + 1 < levels.size(); ++i)
            if (!(levels[i] < levels[i + 1]))
                throw std::invalid_argument("AdmissibleSet: levels must be strictly increasing");
        for (double v : levels)
            if (!std::isfinite(v)) throw std::invalid_argument("AdmissibleSet: levels must be finite");
    }

    size_t count() const { return levels.size(); }
    double lo() const { return levels.front(); }
    double hi() const { return levels.back(); }

    double nearest(double x) const {
        double best = levels[0];
        double bd = std::abs(x - levels[0]);
        for (size_t i = 1; i < levels.size(); ++i) {
            const double d = std::abs(x - levels[i]);
            if (d < bd) {
                bd = d;
                best = levels[i];
            }
        }
        return best;
    }

    double distance_to_nearest(double x) const { return std::abs(x - nearest(x)); }
};

/// Pointwise multi-bang penalty m(t) = (a_{i+1}-t)(t-a_i) on [a_i, a_{i+1}],
/// +infinity outside [a_0, a_n]; zero exactly on the admissible levels.
inline double multibang_pointwise(double t, const AdmissibleSet& A) {
    if (t < A.lo() || t > A.hi()) return std::numeric_limits<double>::infinity();
    const auto it = std::upper_bound(A.levels.begin(), A.levels.end(), t);
    size_t i = static_cast<size_t>(it - A.levels.begin());
    if (i == 0) i = 1;  // t == a_0
    if (i == A.levels.size()) i = A.levels.size() - 1;
    return (A.levels[i] - t) * (t - A.levels[i - 1]);
}

inline double multibang_penalty(const Image& x, const AdmissibleSet& A) {
    double sum = 0.0;
    for (double v : x.values) {
        const double m = multibang_pointwise(v, A);
        if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
        sum += m;
    }
    return sum;
}

// Proximal map of w*m at x, i.e. argmin_z { w m(z) + (z-x)^2/2 }, valid for
// 0 < w < 1/2. Threshold intervals [x_{i,-}, x_{i,+}] map to a_i exactly
// (closed at the boundary), the gaps use the interior formula.
inline double multibang_prox(double x, const AdmissibleSet& A, double w) {
    if (!(w > 0.0 && w < 0.5)) throw std::invalid_argument("multibang_prox: need 0 < w < 1/2");
    const Vec& a = A.levels;
    const size_t n = a.size() - 1;  // levels a_0..a_n
    const auto thr_plus = [&](size_t i) { return a[i] + w * (a[i + 1] - a[i]); };
    const auto thr_minus = [&](size_t i) { return a[i] - w * (a[i] - a[i - 1]); };
    const auto interior = [&](size_t i) { return (x - w * (a[i + 1] + a[i])) / (1.0 - 2.0 * w); };

    if (x <= thr_plus(0)) return a[0];
    for (size_t i = 1; i < n; ++i) {
        if (x < thr_minus(i)) return interior(i - 1);
        if (x <= thr_plus(i)) return a[i];
    }
    if (x >= thr_minus(n)) return a[n];
    return interior(n - 1);
}

// Forward-difference operator of eq-style stacking: for 1-based pixel index
// i in 1..M^2-1 the pair (a(i)-a(i+1), a(i)-a(i+M)), with the first component
// zeroed on the right column and the second zeroed on the bottom row. The
// field stores the pairs contiguously, 2(M^2-1) numbers in total.
inline Vec apply_D(const Image& a) {
    const int m = a.grid.m;
    const int n = m * m;
    Vec y(static_cast<size_t>(2 * (n - 1)), 0.0);
    for (int k = 0; k + 1 < n; ++k) {
        const int row = k / m;
        const int col = k % m;
        const size_t ks = static_cast<size_t>(k);
        double h = 0.0, v = 0.0;
        if (col != m - 1) h = a.values[ks] - a.values[ks + 1];
        if (row != m - 1) v = a.values[ks] - a.values[ks + static_cast<size_t>(m)];
        y[2 * ks] = h;
        y[2 * ks + 1] = v;
    }
    return y;
}

/// Exact adjoint of apply_D.
inline Image apply_D_transpose(const Vec& y, const PixelGrid& grid) {
    const int m = grid.m;
    const int n = m * m;
    if (static_cast<int>(y.size()) != 2 * (n - 1))
        throw std::invalid_argument("apply_D_transpose: field size != 2(M^2-1)");
    Image out(grid, 0.0);
    for (int k = 0; k + 1 < n; ++k) {
        const int row = k / m;
        const int col = k % m;
        const size_t ks = static_cast<size_t>(k);
        if (col != m - 1) {
            out.values[ks] += y[2 * ks];
            out.values[ks + 1] -= y[2 * ks];
        }
        if (row != m - 1) {
            out.values[ks] += y[2 * ks + 1];
            out.values[ks + static_cast<size_t>(m)] -= y[2 * ks + 1];
        }
    }
    return out;
}

/// Smoothed isotropic TV: sum_i sqrt(|D_i a|^2 + c). The gradient below is
/// Lipschitz with constant at most |D|^2 / sqrt(c) <= 8 / sqrt(c).
inline double tv_smoothed(const Image& a, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("tv_smoothed: need c > 0");
    const Vec y = apply_D(a);
    double sum = 0.0;
    for (size_t i = 0; i + 1 < y.size(); i += 2)
        sum += std::sqrt(y[i] * y[i] + y[i + 1] * y[i + 1] + c);
    return sum;
}

inline Image tv_gradient(const Image& a, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("tv_gradient: need c > 0");
    Vec y = apply_D(a);
    for (size_t i = 0; i + 1 < y.size(); i += 2) {
        const double r = std::sqrt(y[i] * y[i] + y[i + 1] * y[i + 1] + c);
        y[i] /= r;
        y[i + 1] /= r;
    }
    return apply_D_transpose(y, a.grid);
}

}  // namespace atrt
