#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "atrt/grid.hpp"

namespace atrt {

/// sinh(z)/z extended by 1 at z = 0; series branch keeps relative error
/// below 1e-14 for small arguments.
inline double sinhc(double z) {
    const double az = std::abs(z);
    if (az < 1e-4) {
        const double z2 = z * z;
        return 1.0 + z2 / 6.0 * (1.0 + z2 / 20.0);
    }
    return std::sinh(z) / z;
}

// Per-segment factor of the discrete AtRT for a segment of length len in a
// pixel with attenuation a:
//   w(len, a) = len * exp(-len*a/2) * sinhc(len*a/2) = (1 - exp(-len*a))/a.
inline double segment_weight(double len, double a) {
    const double z = 0.5 * len * a;
    return len * std::exp(-z) * sinhc(z);
}

/// d/da of segment_weight(len, a); series branch below |len*a| < 1e-4.
inline double segment_weight_da(double len, double a) {
    const double x = len * a;
    if (std::abs(x) < 1e-4) {
        return len * len * (-0.5 + x * (1.0 / 3.0 + x * (-0.125 + x / 30.0)));
    }
    // (x e^{-x} + expm1(-x)) / a^2, the cancellation-safe form
    return (x * std::exp(-x) + std::expm1(-x)) / (a * a);
}

// Parallel-beam geometry: every (angle, offset) pair in angle-major order.
struct ProjectionGeometry {
    Vec angles;
    Vec offsets;

    size_t ray_count() const { return angles.size() * offsets.size(); }
    Ray ray(size_t idx) const {
        const size_t no = offsets.size();
        return Ray{offsets[idx % no], angles[idx / no]};
    }
};

struct Sinogram {
    ProjectionGeometry geometry;
    Vec d;
};

// Ray traces for a whole geometry, computed once and reused across solver
// iterations (the traces depend only on grid and rays, not on a or f).
struct TracedGeometry {
    PixelGrid grid;
    ProjectionGeometry geometry;
    std::vector<RayTrace> traces;
};

inline TracedGeometry trace_geometry(const PixelGrid& grid, const ProjectionGeometry& geom) {
    TracedGeometry tg{grid, geom, {}};
    tg.traces.reserve(geom.ray_count());
    for (size_t i = 0; i < geom.ray_count(); ++i) tg.traces.push_back(trace_ray(grid, geom.ray(i)));
    return tg;
}

/// Downstream attenuation suffix factors: S[N-1] = 1 and
/// S[i-1] = S[i] * exp(-len[i] * a[P[i]]); every S lies in (0, 1].
inline Vec attenuation_suffix(const Image& a, const RayTrace& tr) {
    if (tr.empty()) throw std::invalid_argument("attenuation_suffix: empty trace");
    const size_t n = tr.size();
    Vec s(n);
    s[n - 1] = 1.0;
    for (size_t i = n - 1; i > 0; --i)
        s[i - 1] = s[i] * std::exp(-tr.lengths[i] * a.values[static_cast<size_t>(tr.pixels[i])]);
    return s;
}

/// Exact discrete AtRT value along one traced ray.
inline double atrt_ray_traced(const Image& a, const Image& f, const RayTrace& tr) {
    if (tr.empty()) return 0.0;
    const size_t n = tr.size();
    double suffix = 1.0;
    // accumulate backwards so each term is f * (weight * suffix), the same
    // product order used by the assembled system matrix
    Vec w(n);
    for (size_t i = n; i-- > 0;) {
        const double av = a.values[static_cast<size_t>(tr.pixels[i])];
        w[i] = segment_weight(tr.lengths[i], av) * suffix;
        suffix *= std::exp(-tr.lengths[i] * av);
    }
    double val = 0.0;
    for (size_t i = 0; i < n; ++i) val += f.values[static_cast<size_t>(tr.pixels[i])] * w[i];
    return val;
}

inline double atrt_ray(const Image& a, const Image& f, const RayTrace& tr) {
    if (!(a.grid == f.grid)) throw std::invalid_argument("atrt_ray: a and f on different grids");
    return atrt_ray_traced(a, f, tr);
}

inline double atrt_ray(const Image& a, const Image& f, const Ray& ray) {
    if (!(a.grid == f.grid)) throw std::invalid_argument("atrt_ray: a and f on different grids");
    return atrt_ray_traced(a, f, trace_ray(a.grid, ray));
}

inline Sinogram forward(const Image& a, const Image& f, const TracedGeometry& tg) {
    Sinogram sino{tg.geometry, Vec(tg.traces.size())};
    for (size_t i = 0; i < tg.traces.size(); ++i) sino.d[i] = atrt_ray(a, f, tg.traces[i]);
    return sino;
}

inline Sinogram forward(const Image& a, const Image& f, const ProjectionGeometry& geom) {
    if (!(a.grid == f.grid)) throw std::invalid_argument("forward: a and f on different grids");
    Sinogram sino{geom, Vec(geom.ray_count())};
    for (size_t i = 0; i < geom.ray_count(); ++i)
        sino.d[i] = atrt_ray_traced(a, f, trace_ray(a.grid, geom.ray(i)));
    return sino;
}

// Sparse system matrix R[a]: one row per ray, entries kept in traversal order
// so that apply() reproduces forward() bitwise (same per-row summation
// order). Row sparsity is at most 2M+1.
struct SystemMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<size_t> row_ptr;  // rows+1 entries
    std::vector<int> col;
    Vec val;

    Vec apply(const Vec& f) const {
        Vec out(static_cast<size_t>(rows), 0.0);
        for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc += f[static_cast<size_t>(col[k])] * val[k];
            out[static_cast<size_t>(r)] = acc;
        }
        return out;
    }

    Vec apply_transpose(const Vec& v) const {
        Vec out(static_cast<size_t>(cols), 0.0);
        for (int r = 0; r < rows; ++r)
            for (size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                out[static_cast<size_t>(col[k])] += val[k] * v[static_cast<size_t>(r)];
        return out;
    }
};

inline SystemMatrix assemble_system_matrix(const Image& a, const TracedGeometry& tg) {
    SystemMatrix m;
    m.rows = static_cast<int>(tg.traces.size());
    m.cols = a.grid.pixel_count();
    m.row_ptr.assign(static_cast<size_t>(m.rows) + 1, 0);
    size_t nnz = 0;
    for (const auto& tr : tg.traces) nnz += tr.size();
    m.col.reserve(nnz);
    m.val.reserve(nnz);
    for (int r = 0; r < m.rows; ++r) {
        const RayTrace& tr = tg.traces[static_cast<size_t>(r)];
        const size_t n = tr.size();
        if (n > 0) {
            Vec w(n);
            double suffix = 1.0;
            for (size_t i = n; i-- > 0;) {
                const double av = a.values[static_cast<size_t>(tr.pixels[i])];
                w[i] = segment_weight(tr.lengths[i], av) * suffix;
                suffix *= std::exp(-tr.lengths[i] * av);
            }
            for (size_t i = 0; i < n; ++i) {
                m.col.push_back(tr.pixels[i]);
                m.val.push_back(w[i]);
            }
        }
        m.row_ptr[static_cast<size_t>(r) + 1] = m.col.size();
    }
    return m;
}

inline SystemMatrix assemble_system_matrix(const Image& a, const ProjectionGeometry& geom) {
    return assemble_system_matrix(a, trace_geometry(a.grid, geom));
}

// Gradient of a -> ||R[a]f - d||^2. Differentiating each per-ray sum gives,
// for the pixel of segment k,
//   d(value)/d(a_k) = f_k S_k w'(len_k, a_k) - len_k * sum_{i<k} f_i w_i S_i,
// the first term from the segment's own weight and the second from the
// upstream suffix factors.
inline Image fidelity_gradient_a(const Image& a, const Image& f, const Sinogram& d,
                                 const TracedGeometry& tg) {
    if (!(a.grid == f.grid)) throw std::invalid_argument("fidelity_gradient_a: grid mismatch");
    if (d.d.size() != tg.traces.size())
        throw std::invalid_argument("fidelity_gradient_a: data/geometry size mismatch");
    Image grad(a.grid, 0.0);
    Vec w, s;
    for (size_t r = 0; r < tg.traces.size(); ++r) {
        const RayTrace& tr = tg.traces[r];
        const size_t n = tr.size();
        if (n == 0) continue;
        w.assign(n, 0.0);
        s.assign(n, 0.0);
        double suffix = 1.0;
        for (size_t i = n; i-- > 0;) {
            const double av = a.values[static_cast<size_t>(tr.pixels[i])];
            s[i] = suffix;
            w[i] = segment_weight(tr.lengths[i], av) * suffix;
            suffix *= std::exp(-tr.lengths[i] * av);
        }
        double value = 0.0;
        for (size_t i = 0; i < n; ++i) value += f.values[static_cast<size_t>(tr.pixels[i])] * w[i];
        const double two_res = 2.0 * (value - d.d[r]);
        double prefix = 0.0;  // sum_{i<k} f_i w_i
        for (size_t k = 0; k < n; ++k) {
            const size_t px = static_cast<size_t>(tr.pixels[k]);
            const double fk = f.values[px];
            const double ak = a.values[px];
            grad.values[px] +=
                two_res * (fk * s[k] * segment_weight_da(tr.lengths[k], ak) - tr.lengths[k] * prefix);
            prefix += fk * w[k];
        }
    }
    return grad;
}

inline Image fidelity_gradient_a(const Image& a, const Image& f, const Sinogram& d) {
    return fidelity_gradient_a(a, f, d, trace_geometry(a.grid, d.geometry));
}

}  // namespace atrt
