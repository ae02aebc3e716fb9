#pragma once

#include <cmath>
#include <vector>

#include "atrt/grid.hpp"

namespace atrt {

inline double vdot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double vnorm(const Vec& a) { return std::sqrt(vdot(a, a)); }

inline double vdist(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// y += s * x
inline void vaxpy(Vec& y, double s, const Vec& x) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline Vec vscaled(const Vec& x, double s) {
    Vec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
    return out;
}

}  // namespace atrt
