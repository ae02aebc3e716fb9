#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrt/forward.hpp"
#include "atrt/grid.hpp"
#include "atrt/regularize.hpp"
#include "atrt/rng.hpp"
#include "atrt/singular.hpp"
#include "atrt/source.hpp"

namespace atrt {

// Synthetic phantom family of the reconstruction experiments. Shape
// coordinates are normalised to [-1, 1]^2 and scaled to the grid extent, so
// the same spec rasterised on different grid sizes describes the same
// physical phantom (data can be generated finer than the reconstruction).
struct PhantomSpec {
    std::string name = "nested_disks";
    AdmissibleSet admissible{Vec{0.0, 1.0}};
    // nested_disks parameters; the default is deliberately non-radial (a
    // centred annulus with a centred source is the known non-unique case)
    std::vector<Point2> disk_centers{{-0.12, 0.08}, {-0.02, 0.16}};
    Vec disk_radii{0.62, 0.28};
    Vec disk_values{1.0, 0.0};
    // source bumps in normalised coordinates
    std::vector<RadialBump> source{{{0.25, -0.2}, 0.6, 1.0}, {{-0.3, 0.35}, 0.35, 0.6}};
};

inline PhantomSpec phantom_by_name(const std::string& name) {
    PhantomSpec spec;
    spec.name = name;
    if (name == "nested_disks") {
        // defaults above
    } else if (name == "binary_shapes") {
        spec.admissible = AdmissibleSet{Vec{0.0, 1.0}};
    } else if (name == "three_region") {
        spec.admissible = AdmissibleSet{Vec{0.0, 0.5, 1.0}};
    } else if (name == "multibang_shepp_logan") {
        spec.admissible = AdmissibleSet{Vec{0.0, 0.2, 0.3, 0.4, 1.0}};
        spec.source = {{{0.0, 0.1}, 0.8, 1.0}, {{-0.25, -0.3}, 0.3, 0.6}};
    } else {
        throw std::invalid_argument("unknown phantom name: " + name);
    }
    return spec;
}

namespace detail {

struct Ellipse {
    double cx, cy, a, b, phi, value;

    bool contains(double x, double y) const {
        const double cs = std::cos(phi), sn = std::sin(phi);
        const double u = cs * (x - cx) + sn * (y - cy);
        const double v = -sn * (x - cx) + cs * (y - cy);
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

// classic Shepp-Logan ellipse table (additive intensities)
inline const std::vector<Ellipse>& shepp_logan_ellipses() {
    static const std::vector<Ellipse> es = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 2.0},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98},
        {0.22, 0.0, 0.11, 0.31, -0.31415926535897932, -0.02},
        {-0.22, 0.0, 0.16, 0.41, 0.31415926535897932, -0.02},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.01},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.01},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.01},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.01},
        {0.0, -0.605, 0.023, 0.023, 0.0, 0.01},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.01},
    };
    return es;
}

inline double phantom_attenuation(const PhantomSpec& spec, double x, double y) {
    if (spec.name == "nested_disks") {
        double a = 0.0;
        for (size_t j = 0; j < spec.disk_radii.size(); ++j) {
            const double r = spec.disk_radii[j];
            const double ux = x - spec.disk_centers[j].x;
            const double uy = y - spec.disk_centers[j].y;
            if (ux * ux + uy * uy < r * r) a = spec.disk_values[j];
        }
        return a;
    }
    if (spec.name == "binary_shapes") {
        const double dx1 = x + 0.35, dy1 = y - 0.3;
        if (dx1 * dx1 + dy1 * dy1 < 0.3 * 0.3) return 1.0;
        const double dx2 = x - 0.4, dy2 = y - 0.25;
        if ((dx2 * dx2) / (0.3 * 0.3) + (dy2 * dy2) / (0.18 * 0.18) < 1.0) return 1.0;
        if (std::abs(x + 0.05) < 0.42 && std::abs(y + 0.42) < 0.14) return 1.0;
        return 0.0;
    }
    if (spec.name == "three_region") {
        const double r2 = x * x + y * y;
        if (r2 < 0.25 * 0.25) return 1.0;
        if (r2 < 0.55 * 0.55) return 0.5;
        const double dx1 = x - 0.62, dy1 = y + 0.55;
        if (dx1 * dx1 + dy1 * dy1 < 0.18 * 0.18) return 1.0;
        return 0.0;
    }
    if (spec.name == "multibang_shepp_logan") {
        double v = 0.0;
        for (const auto& e : shepp_logan_ellipses())
            if (e.contains(x, y)) v += e.value;
        // snap the additive intensities to the admissible set
        return spec.admissible.nearest(v);
    }
    throw std::invalid_argument("unknown phantom name: " + spec.name);
}

}  // namespace detail

/// Rasterise the phantom pair at pixel centres; a is exactly multi-bang over
/// the spec's admissible set and f >= 0.
inline std::pair<Image, Image> make_phantom(const PhantomSpec& spec, const PixelGrid& grid) {
    if (spec.name == "nested_disks") {
        if (spec.disk_radii.size() != spec.disk_values.size() ||
            spec.disk_radii.size() != spec.disk_centers.size() || spec.disk_radii.empty())
            throw std::invalid_argument("make_phantom: nested_disks needs matching centers/radii/values");
        for (size_t j = 0; j + 1 < spec.disk_radii.size(); ++j) {
            const double gap = norm(spec.disk_centers[j] - spec.disk_centers[j + 1]);
            if (!(gap + spec.disk_radii[j + 1] < spec.disk_radii[j]))
                throw std::invalid_argument("make_phantom: disks must be strictly nested");
        }
    }
    const double h = grid.half_extent();
    Image a(grid, 0.0);
    Image f(grid, 0.0);
    for (int r = 0; r < grid.m; ++r)
        for (int c = 0; c < grid.m; ++c) {
            const Point2 p = grid.center(r, c);
            const double xn = p.x / h;
            const double yn = p.y / h;
            a.at(r, c) = detail::phantom_attenuation(spec, xn, yn);
            double fv = 0.0;
            for (const auto& b : spec.source) fv += b.eval({xn, yn});
            f.at(r, c) = fv;
        }
    return {std::move(a), std::move(f)};
}

/// equally spaced angles over [0, pi) with a small seeded perturbation
/// (|eps| <= pi/(100 n_proj)) and offsets spanning the grid circumradius
inline ProjectionGeometry make_geometry(int n_proj, int n_det, const PixelGrid& grid,
                                        std::uint64_t perturb_seed) {
    if (n_proj < 1 || n_det < 2) throw std::invalid_argument("make_geometry: need n_proj >= 1, n_det >= 2");
    constexpr double pi = 3.14159265358979323846;
    ProjectionGeometry geom;
    Rng rng(perturb_seed);
    const double eps_max = pi / (100.0 * n_proj);
    geom.angles.resize(static_cast<size_t>(n_proj));
    for (int j = 0; j < n_proj; ++j)
        geom.angles[static_cast<size_t>(j)] = j * pi / n_proj + rng.uniform(-eps_max, eps_max);
    const double span = grid.m * grid.dx / std::sqrt(2.0);
    geom.offsets.resize(static_cast<size_t>(n_det));
    for (int i = 0; i < n_det; ++i)
        geom.offsets[static_cast<size_t>(i)] = -span + 2.0 * span * i / (n_det - 1);
    return geom;
}

/// default detector count: M * sqrt(2), rounded up
inline int default_detector_count(int m) {
    return static_cast<int>(std::ceil(m * std::sqrt(2.0)));
}

/// additive Gaussian noise with sigma = level * RMS(d), seeded
inline Sinogram add_noise(const Sinogram& d, double level, std::uint64_t seed) {
    if (level < 0.0) throw std::invalid_argument("add_noise: level must be >= 0");
    Sinogram out = d;
    double ms = 0.0;
    for (double v : d.d) ms += v * v;
    const double sigma = level * std::sqrt(ms / static_cast<double>(d.d.size()));
    Rng rng(seed);
    for (double& v : out.d) v += sigma * rng.gaussian();
    return out;
}

/// continuous nested-disk description matching the nested_disks spec on a
/// grid of half-extent h (for the grid-free oracle)
inline NestedConvexPhantom nested_disks_continuous(const PhantomSpec& spec, double h) {
    if (spec.name != "nested_disks")
        throw std::invalid_argument("nested_disks_continuous: spec is not nested_disks");
    std::vector<ConvexShape> shapes;
    Vec incs;
    double prev = 0.0;
    for (size_t j = 0; j < spec.disk_radii.size(); ++j) {
        shapes.push_back(make_disk({spec.disk_centers[j].x * h, spec.disk_centers[j].y * h},
                                   spec.disk_radii[j] * h));
        incs.push_back(spec.disk_values[j] - prev);
        prev = spec.disk_values[j];
    }
    return NestedConvexPhantom(std::move(shapes), std::move(incs));
}

}  // namespace atrt
