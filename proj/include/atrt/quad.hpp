#pragma once

#include <cmath>

namespace atrt {

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
inline constexpr double kXgk[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
inline constexpr double kWgk[8] = {
    0.02293532201052922, 0.06309209262997855, 0.10479001032225018, 0.14065325971552592,
    0.16900472663926790, 0.19035057806478541, 0.20443294007529889, 0.20948214108472783};
inline constexpr double kWg[4] = {
    0.12948496616886969, 0.27970539148927664, 0.38183005050511894, 0.41795918367346939};

template <class F>
inline void gk15(const F& f, double a, double b, double& kronrod, double& gauss) {
    const double h = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    const double fc = f(mid);
    double resk = kWgk[7] * fc;
    double resg = kWg[3] * fc;
    for (int j = 0; j < 7; ++j) {
        const double x = h * kXgk[j];
        const double fsum = f(mid - x) + f(mid + x);
        resk += kWgk[j] * fsum;
        if (j % 2 == 1) resg += kWg[j / 2] * fsum;
    }
    kronrod = resk * h;
    gauss = resg * h;
}

template <class F>
inline double adaptive_gk(const F& f, double a, double b, double tol, int depth) {
    double k, g;
    gk15(f, a, b, k, g);
    const double err = std::abs(k - g);
    if (err <= tol || depth >= 45 || !(b - a > 1e-15 * (std::abs(a) + std::abs(b) + 1.0))) return k;
    const double mid = 0.5 * (a + b);
    return adaptive_gk(f, a, mid, 0.5 * tol, depth + 1) +
           adaptive_gk(f, mid, b, 0.5 * tol, depth + 1);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b] to absolute
/// tolerance tol.
template <class F>
inline double integrate(const F& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    return detail::adaptive_gk(f, a, b, tol, 0);
}

}  // namespace atrt
