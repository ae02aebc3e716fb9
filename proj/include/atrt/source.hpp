#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "atrt/grid.hpp"

namespace atrt {

// C^1 radial bump amp * (1 - (r/R)^2)^2 supported on r < R; value and
// gradient both vanish at the support boundary.
struct RadialBump {
    Point2 center;
    double radius = 1.0;
    double amplitude = 1.0;

    double eval(Point2 p) const {
        const double dx = p.x - center.x;
        const double dy = p.y - center.y;
        const double q = (dx * dx + dy * dy) / (radius * radius);
        if (q >= 1.0) return 0.0;
        const double u = 1.0 - q;
        return amplitude * u * u;
    }

    // exact line integral along the ray (independent oracle for a = 0):
    // (16/15) * amp * sqrt(R^2-d^2) * (1 - d^2/R^2)^2 with d the impact
    // parameter of the ray relative to the bump centre
    double chord_integral(const Ray& ray) const {
        const Point2 th = ray.theta();
        const Point2 p0 = ray.point(0.0);
        const Point2 rel{center.x - p0.x, center.y - p0.y};
        const double tc = dot(rel, th);
        const double d2 = dot(rel, rel) - tc * tc;
        const double r2 = radius * radius;
        if (d2 >= r2) return 0.0;
        const double a = 1.0 - d2 / r2;
        return (16.0 / 15.0) * amplitude * std::sqrt(r2 - d2) * a * a;
    }
};

// Non-negative C^1 compactly supported source built from radial bumps.
struct SmoothSource {
    std::vector<RadialBump> bumps;

    SmoothSource() = default;
    explicit SmoothSource(std::vector<RadialBump> bs) : bumps(std::move(bs)) {
        for (const auto& b : bumps) {
            if (!(b.radius > 0.0)) throw std::invalid_argument("SmoothSource: bump radius must be positive");
            if (b.amplitude < 0.0) throw std::invalid_argument("SmoothSource: bump amplitude must be >= 0");
        }
    }

    double eval(Point2 p) const {
        double v = 0.0;
        for (const auto& b : bumps) v += b.eval(p);
        return v;
    }

    double eval_on_ray(const Ray& ray, double t) const { return eval(ray.point(t)); }

    /// t-parameters where a bump support begins or ends along the ray
    Vec support_breaks(const Ray& ray) const {
        Vec out;
        const Point2 th = ray.theta();
        const Point2 p0 = ray.point(0.0);
        for (const auto& b : bumps) {
            const Point2 rel{b.center.x - p0.x, b.center.y - p0.y};
            const double tc = dot(rel, th);
            const double d2 = dot(rel, rel) - tc * tc;
            const double r2 = b.radius * b.radius;
            if (d2 < r2) {
                const double half = std::sqrt(r2 - d2);
                out.push_back(tc - half);
                out.push_back(tc + half);
            }
        }
        return out;
    }

    double chord_integral(const Ray& ray) const {
        double v = 0.0;
        for (const auto& b : bumps) v += b.chord_integral(ray);
        return v;
    }
};

}  // namespace atrt
