#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "svreg/common.hpp"

namespace svreg {

/// Axis-aligned voxel lattice. Fields are stored row-major with the last
/// axis fastest; displacements and coordinates are in voxel units.
struct Grid {
    int ndim = 0;
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    Grid() = default;

    Grid(std::initializer_list<int> d, std::initializer_list<double> s = {}) {
        ndim = static_cast<int>(d.size());
        if (ndim != 2 && ndim != 3) throw input_error("Grid: ndim must be 2 or 3");
        int i = 0;
        for (int v : d) {
            if (v < 2) throw input_error("Grid: all dims must be >= 2");
            dims[i++] = v;
        }
        if (s.size() != 0) {
            if (static_cast<int>(s.size()) != ndim)
                throw input_error("Grid: spacing ndim mismatch");
            i = 0;
            for (double v : s) {
                if (!(v > 0.0)) throw input_error("Grid: spacing must be positive");
                spacing[i++] = v;
            }
        }
    }

    std::size_t voxel_count() const {
        std::size_t n = 1;
        for (int a = 0; a < ndim; ++a) n *= static_cast<std::size_t>(dims[a]);
        return n;
    }

    /// Element strides (last axis fastest).
    std::array<std::size_t, 3> strides() const {
        std::array<std::size_t, 3> s{0, 0, 0};
        std::size_t acc = 1;
        for (int a = ndim - 1; a >= 0; --a) {
            s[a] = acc;
            acc *= static_cast<std::size_t>(dims[a]);
        }
        return s;
    }

    std::size_t index(const std::array<int, 3>& p) const {
        std::size_t idx = 0;
        for (int a = 0; a < ndim; ++a)
            idx = idx * static_cast<std::size_t>(dims[a]) + static_cast<std::size_t>(p[a]);
        return idx;
    }

    std::array<int, 3> coords(std::size_t idx) const {
        std::array<int, 3> p{0, 0, 0};
        for (int a = ndim - 1; a >= 0; --a) {
            p[a] = static_cast<int>(idx % static_cast<std::size_t>(dims[a]));
            idx /= static_cast<std::size_t>(dims[a]);
        }
        return p;
    }

    bool operator==(const Grid& o) const {
        if (ndim != o.ndim) return false;
        for (int a = 0; a < ndim; ++a)
            if (dims[a] != o.dims[a] || spacing[a] != o.spacing[a]) return false;
        return true;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }
};

struct ScalarField {
    Grid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0)
        : grid(g), values(g.voxel_count(), fill) {}

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }
};

/// Dense label map (integer per voxel).
struct IntField {
    Grid grid;
    std::vector<std::int32_t> values;

    IntField() = default;
    explicit IntField(const Grid& g, std::int32_t fill = 0)
        : grid(g), values(g.voxel_count(), fill) {}
};

/// d components per voxel, component-major: component c of voxel i lives at
/// data[c * n + i]. Units are voxels.
struct VectorField {
    Grid grid;
    std::vector<double> data;

    VectorField() = default;
    explicit VectorField(const Grid& g, double fill = 0.0)
        : grid(g), data(g.voxel_count() * static_cast<std::size_t>(g.ndim), fill) {}

    double* component(int c) { return data.data() + static_cast<std::size_t>(c) * grid.voxel_count(); }
    const double* component(int c) const {
        return data.data() + static_cast<std::size_t>(c) * grid.voxel_count();
    }
    double& at(int c, std::size_t i) { return data[static_cast<std::size_t>(c) * grid.voxel_count() + i]; }
    double at(int c, std::size_t i) const {
        return data[static_cast<std::size_t>(c) * grid.voxel_count() + i];
    }
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* where) {
    if (a != b) throw input_error(std::string(where) + ": grid mismatch");
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Multilinear sampling with clamp-to-edge
// ---------------------------------------------------------------------------

namespace detail {

/// Per-axis interpolation cell. Coordinates are clamped into [0, dim-1];
/// at the upper edge the cell degenerates (lo == hi, t == 0) so values at
/// integer coordinates are reproduced bit-exactly.
struct AxisCell {
    int lo, hi;       // corner indices
    double t;         // fractional offset in [0, 1)
    double dclamp;    // 1 inside the domain, 0 where the clamp is active
};

inline AxisCell axis_cell(double x, int dim) {
    AxisCell c{};
    c.dclamp = (x < 0.0 || x > static_cast<double>(dim - 1)) ? 0.0 : 1.0;
    double xc = std::clamp(x, 0.0, static_cast<double>(dim - 1));
    int lo = static_cast<int>(std::floor(xc));
    if (lo > dim - 1) lo = dim - 1;
    int hi = lo + 1 > dim - 1 ? dim - 1 : lo + 1;
    c.lo = lo;
    c.hi = hi;
    c.t = xc - static_cast<double>(lo);
    return c;
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace detail

/// Samples one component plane at a (voxel-unit) point. When grad is non-null
/// it receives the spatial derivative of the interpolant per axis; the
/// derivative is zero along axes where the coordinate was clamped outside the
/// domain or the cell is degenerate at the upper edge.
inline double sample_point(const double* vals, const Grid& g, const double* x,
                           double* grad = nullptr) {
    const int d = g.ndim;
    const auto st = g.strides();
    detail::AxisCell cell[3];
    for (int a = 0; a < d; ++a) cell[a] = detail::axis_cell(x[a], g.dims[a]);

    // Corner c uses bit a of c to pick lo/hi on axis a. Reducing with
    // cur = 2^b pairs entries that differ exactly in axis b.
    double corner[8];
    const int ncorner = 1 << d;
    for (int c = 0; c < ncorner; ++c) {
        std::size_t idx = 0;
        for (int a = 0; a < d; ++a)
            idx += static_cast<std::size_t>((c >> a) & 1 ? cell[a].hi : cell[a].lo) * st[a];
        corner[c] = vals[idx];
    }
    if (grad) {
        for (int a = 0; a < d; ++a) {
            double buf[8];
            for (int c = 0; c < ncorner; ++c) buf[c] = corner[c];
            int cur = ncorner;
            for (int b = d - 1; b >= 0; --b) {
                cur >>= 1;
                for (int c = 0; c < cur; ++c)
                    buf[c] = (b == a) ? buf[c + cur] - buf[c]
                                      : detail::lerp(buf[c], buf[c + cur], cell[b].t);
            }
            grad[a] = buf[0] * cell[a].dclamp;
        }
    }
    double buf[8];
    for (int c = 0; c < ncorner; ++c) buf[c] = corner[c];
    int cur = ncorner;
    for (int b = d - 1; b >= 0; --b) {
        cur >>= 1;
        for (int c = 0; c < cur; ++c) buf[c] = detail::lerp(buf[c], buf[c + cur], cell[b].t);
    }
    return buf[0];
}

/// Adds w * value onto the interpolation corners of point x (transpose of
/// sampling with respect to the source values).
inline void scatter_point(double* vals, const Grid& g, const double* x, double value) {
    const int d = g.ndim;
    const auto st = g.strides();
    detail::AxisCell cell[3];
    for (int a = 0; a < d; ++a) cell[a] = detail::axis_cell(x[a], g.dims[a]);
    const int ncorner = 1 << d;
    for (int c = 0; c < ncorner; ++c) {
        std::size_t idx = 0;
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const bool hi = (c >> a) & 1;
            idx += static_cast<std::size_t>(hi ? cell[a].hi : cell[a].lo) * st[a];
            w *= hi ? cell[a].t : 1.0 - cell[a].t;
        }
        if (w != 0.0) vals[idx] += w * value;
    }
}

/// [field op] Multilinear interpolation of a scalar field at arbitrary
/// voxel-unit points, clamp-to-edge. Exact at integer grid coordinates.
inline std::vector<double> sample_linear(const ScalarField& f,
                                         std::span<const std::array<double, 3>> coords) {
    if (!all_finite(f.values)) throw input_error("sample_linear: field has non-finite values");
    std::vector<double> out(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (int a = 0; a < f.grid.ndim; ++a)
            if (!std::isfinite(coords[i][a]))
                throw input_error("sample_linear: non-finite coordinate");
        out[i] = sample_point(f.values.data(), f.grid, coords[i].data());
    }
    return out;
}

/// [field op] Warps a scalar field by a displacement: out(p) = f(p + disp(p)).
inline ScalarField warp(const ScalarField& f, const VectorField& disp) {
    require_same_grid(f.grid, disp.grid, "warp");
    const Grid& g = f.grid;
    const int d = g.ndim;
    const std::size_t n = g.voxel_count();
    ScalarField out(g);
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) + disp.at(a, i);
        out.values[i] = sample_point(f.values.data(), g, x);
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    return out;
}

/// Vector-field overload: each component warped by the same displacement.
inline VectorField warp(const VectorField& f, const VectorField& disp) {
    require_same_grid(f.grid, disp.grid, "warp");
    const Grid& g = f.grid;
    const int d = g.ndim;
    const std::size_t n = g.voxel_count();
    VectorField out(g);
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) + disp.at(a, i);
        for (int c = 0; c < d; ++c) out.at(c, i) = sample_point(f.component(c), g, x);
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    return out;
}

/// Nearest-neighbor warp for label maps: out(p) = f(round(p + disp(p))),
/// clamped to the domain. Values stay integral.
inline IntField warp_nearest(const IntField& f, const VectorField& disp) {
    require_same_grid(f.grid, disp.grid, "warp_nearest");
    const Grid& g = f.grid;
    const int d = g.ndim;
    IntField out(g);
    const std::size_t n = g.voxel_count();
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        std::array<int, 3> q{0, 0, 0};
        for (int a = 0; a < d; ++a) {
            const double x = static_cast<double>(p[a]) + disp.at(a, i);
            q[a] = std::clamp(static_cast<int>(std::lround(x)), 0, g.dims[a] - 1);
        }
        out.values[i] = f.values[g.index(q)];
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    return out;
}

/// [field op] Displacement of the composed map phi_outer(phi_inner(.)):
/// result(p) = outer(p + inner(p)) + inner(p).
inline VectorField compose(const VectorField& outer, const VectorField& inner) {
    require_same_grid(outer.grid, inner.grid, "compose");
    VectorField out = warp(outer, inner);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += inner.data[i];
    return out;
}

/// [field op] Align-corners multilinear resampling onto a finer grid:
/// source voxel i maps to target coordinate i*(T-1)/(S-1) per axis.
inline ScalarField upsample_linear(const ScalarField& f, const Grid& target) {
    const Grid& src = f.grid;
    if (target.ndim != src.ndim) throw input_error("upsample_linear: ndim mismatch");
    for (int a = 0; a < src.ndim; ++a)
        if (target.dims[a] < src.dims[a])
            throw input_error("upsample_linear: target smaller than source");
    const int d = src.ndim;
    double scale[3];
    for (int a = 0; a < d; ++a)
        scale[a] = static_cast<double>(src.dims[a] - 1) / static_cast<double>(target.dims[a] - 1);
    ScalarField out(target);
    const std::size_t n = target.voxel_count();
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) * scale[a];
        out.values[i] = sample_point(f.values.data(), src, x);
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < target.dims[a]) break;
            p[a] = 0;
        }
    }
    return out;
}

/// Transpose of upsample_linear: accumulates a full-resolution gradient back
/// onto the source grid.
inline ScalarField upsample_linear_adjoint(const ScalarField& grad_target, const Grid& source) {
    const Grid& tgt = grad_target.grid;
    if (tgt.ndim != source.ndim) throw input_error("upsample_linear_adjoint: ndim mismatch");
    const int d = source.ndim;
    double scale[3];
    for (int a = 0; a < d; ++a)
        scale[a] = static_cast<double>(source.dims[a] - 1) / static_cast<double>(tgt.dims[a] - 1);
    ScalarField out(source, 0.0);
    const std::size_t n = tgt.voxel_count();
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) * scale[a];
        scatter_point(out.values.data(), source, x, grad_target.values[i]);
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < tgt.dims[a]) break;
            p[a] = 0;
        }
    }
    return out;
}

/// [field op] Forward differences per axis; zero on the last slice of each
/// axis (no forward neighbor there).
inline std::vector<ScalarField> forward_gradient(const ScalarField& f) {
    const Grid& g = f.grid;
    const auto st = g.strides();
    std::vector<ScalarField> out;
    out.reserve(g.ndim);
    const std::size_t n = g.voxel_count();
    for (int a = 0; a < g.ndim; ++a) {
        ScalarField df(g, 0.0);
        std::array<int, 3> p{0, 0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            if (p[a] + 1 < g.dims[a]) df.values[i] = f.values[i + st[a]] - f.values[i];
            for (int b = g.ndim - 1; b >= 0; --b) {
                if (++p[b] < g.dims[b]) break;
                p[b] = 0;
            }
        }
        out.push_back(std::move(df));
    }
    return out;
}

inline std::vector<VectorField> forward_gradient(const VectorField& f) {
    const Grid& g = f.grid;
    const auto st = g.strides();
    const std::size_t n = g.voxel_count();
    std::vector<VectorField> out;
    out.reserve(g.ndim);
    for (int a = 0; a < g.ndim; ++a) {
        VectorField df(g, 0.0);
        for (int c = 0; c < g.ndim; ++c) {
            const double* src = f.component(c);
            double* dst = df.component(c);
            std::array<int, 3> p{0, 0, 0};
            for (std::size_t i = 0; i < n; ++i) {
                if (p[a] + 1 < g.dims[a]) dst[i] = src[i + st[a]] - src[i];
                for (int b = g.ndim - 1; b >= 0; --b) {
                    if (++p[b] < g.dims[b]) break;
                    p[b] = 0;
                }
            }
        }
        out.push_back(std::move(df));
    }
    return out;
}

}  // namespace svreg
