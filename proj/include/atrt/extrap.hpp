#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "atrt/grid.hpp"

namespace atrt {

/// Richardson/Neville polynomial extrapolation of samples (h_i, v_i) to
/// h = 0. The h_i must be distinct and positive.
inline double extrapolate_to_zero(const Vec& h, const Vec& v) {
    if (h.size() != v.size() || h.empty())
        throw std::invalid_argument("extrapolate_to_zero: bad sample set");
    Vec p = v;
    const size_t n = h.size();
    for (size_t lvl = 1; lvl < n; ++lvl)
        for (size_t i = 0; i + lvl < n; ++i) {
            // Neville update evaluated at 0
            p[i] = (h[i + lvl] * p[i] - h[i] * p[i + 1]) / (h[i + lvl] - h[i]);
        }
    return p[0];
}

struct PowerFit {
    double exponent = 0.0;
    double amplitude = 0.0;
};

/// Least-squares fit |v| ~ A * h^p on log-log axes.
inline PowerFit fit_power_law(const Vec& h, const Vec& v) {
    if (h.size() != v.size() || h.size() < 2)
        throw std::invalid_argument("fit_power_law: need at least two samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(h.size());
    for (size_t i = 0; i < h.size(); ++i) {
        const double av = std::abs(v[i]);
        const double x = std::log(h[i]);
        const double y = std::log(av > 0.0 ? av : 1e-300);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    PowerFit out;
    out.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    out.amplitude = std::exp((sy - out.exponent * sx) / n);
    return out;
}

/// Intercept of the least-squares line v ~ C + b * sqrt(h); estimates the
/// h -> 0 limit of a quantity with a half-order correction.
inline double fit_intercept_sqrt(const Vec& h, const Vec& v) {
    if (h.size() != v.size() || h.size() < 2)
        throw std::invalid_argument("fit_intercept_sqrt: need at least two samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(h.size());
    for (size_t i = 0; i < h.size(); ++i) {
        const double x = std::sqrt(h[i]);
        sx += x;
        sy += v[i];
        sxx += x * x;
        sxy += x * v[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return (sy - slope * sx) / n;
}

}  // namespace atrt
