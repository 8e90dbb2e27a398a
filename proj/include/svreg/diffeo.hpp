#pragma once

#include <cmath>
#include <vector>

#include "svreg/field.hpp"

namespace svreg {

/// Deformation-regularity summary. pct_nonpos_j uses central differences and
/// is the primary reported number; pct_ndv is the one-sided-difference
/// stand-in for the non-diffeomorphic volume (fraction of non-positive
/// one-sided Jacobian combinations per voxel, averaged over the domain).
struct JacobianReport {
    double pct_nonpos_j = 0.0;
    double pct_ndv = 0.0;
    double min_j = 0.0;
    ScalarField determinant;
};

/// [diffeo op] Scaling-and-squaring exponentiation of a stationary velocity
/// field: u_0 = v / 2^N, then N self-compositions. Returns the displacement
/// of exp(v).
inline VectorField exponentiate(const VectorField& v, int n_steps) {
    if (n_steps < 0) throw input_error("exponentiate: n_steps must be >= 0");
    VectorField u = v;
    const double scale = std::ldexp(1.0, -n_steps);  // 2^-N
    for (auto& x : u.data) x *= scale;
    for (int k = 0; k < n_steps; ++k) u = compose(u, u);
    return u;
}

namespace detail {

/// Reverse-mode step through w = compose(u, u). Three dependency paths:
/// the additive identity term, the sampled values (scatter with the
/// interpolation weights), and the sample coordinates (spatial derivative of
/// the interpolant).
inline VectorField self_compose_backward(const VectorField& u, const VectorField& grad_w) {
    const Grid& g = u.grid;
    const int d = g.ndim;
    const std::size_t n = g.voxel_count();
    VectorField grad_u = grad_w;  // direct path
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) + u.at(a, i);
        for (int c = 0; c < d; ++c) {
            const double gw = grad_w.at(c, i);
            // value path: scatter gw onto the corners of component c
            if (gw != 0.0) scatter_point(grad_u.component(c), g, x, gw);
            // coordinate path: J[c][a] = d/dx_a of the interpolant of u_c
            double grad_c[3];
            sample_point(u.component(c), g, x, grad_c);
            for (int a = 0; a < d; ++a) grad_u.at(a, i) += gw * grad_c[a];
        }
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    return grad_u;
}

}  // namespace detail

/// [diffeo op] Gradient of exponentiate with respect to v: replays the
/// squaring chain and propagates the upstream adjoint through each
/// self-composition.
inline VectorField exponentiate_with_adjoint(const VectorField& v, int n_steps,
                                             const VectorField& upstream) {
    if (n_steps < 0) throw input_error("exponentiate_with_adjoint: n_steps must be >= 0");
    require_same_grid(v.grid, upstream.grid, "exponentiate_with_adjoint");
    const double scale = std::ldexp(1.0, -n_steps);
    std::vector<VectorField> chain;
    chain.reserve(static_cast<std::size_t>(n_steps) + 1);
    VectorField u = v;
    for (auto& x : u.data) x *= scale;
    chain.push_back(u);
    for (int k = 0; k < n_steps; ++k) {
        u = compose(u, u);
        chain.push_back(u);
    }
    VectorField grad = upstream;
    for (int k = n_steps - 1; k >= 0; --k) grad = detail::self_compose_backward(chain[k], grad);
    for (auto& x : grad.data) x *= scale;
    return grad;
}

/// [diffeo op] det(I + grad u) per voxel, central differences in the
/// interior and one-sided at the boundaries.
inline ScalarField jacobian_determinant(const VectorField& disp) {
    const Grid& g = disp.grid;
    const int d = g.ndim;
    const auto st = g.strides();
    const std::size_t n = g.voxel_count();
    ScalarField det(g);
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double j[3][3] = {{0}};
        for (int a = 0; a < d; ++a) {
            std::size_t hi = i, lo = i;
            double denom;
            if (p[a] == 0) {
                hi = i + st[a];
                denom = 1.0;
            } else if (p[a] == g.dims[a] - 1) {
                lo = i - st[a];
                denom = 1.0;
            } else {
                hi = i + st[a];
                lo = i - st[a];
                denom = 2.0;
            }
            for (int c = 0; c < d; ++c)
                j[c][a] = (disp.at(c, hi) - disp.at(c, lo)) / denom + (c == a ? 1.0 : 0.0);
        }
        if (d == 2) {
            det.values[i] = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        } else {
            det.values[i] = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                            j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                            j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        }
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    return det;
}

/// [diffeo op] Folding metrics: fraction of voxels with non-positive
/// central-difference determinant, plus the one-sided-difference family
/// measure. Per voxel, all 2^d sign combinations of one-sided differences are
/// evaluated (falling back to the available side at boundaries) and the
/// non-positive fraction is averaged.
inline JacobianReport fold_metrics(const VectorField& disp) {
    const Grid& g = disp.grid;
    const int d = g.ndim;
    const auto st = g.strides();
    const std::size_t n = g.voxel_count();

    JacobianReport rep;
    rep.determinant = jacobian_determinant(disp);
    rep.min_j = rep.determinant.values[0];
    std::size_t nonpos = 0;
    for (double v : rep.determinant.values) {
        if (v <= 0.0) ++nonpos;
        rep.min_j = std::min(rep.min_j, v);
    }
    rep.pct_nonpos_j = static_cast<double>(nonpos) / static_cast<double>(n);

    double ndv_acc = 0.0;
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        // forward and backward differences per axis, replicated at borders
        double fwd[3][3], bwd[3][3];
        for (int a = 0; a < d; ++a) {
            const bool has_f = p[a] + 1 < g.dims[a];
            const bool has_b = p[a] > 0;
            for (int c = 0; c < d; ++c) {
                const double df =
                    has_f ? disp.at(c, i + st[a]) - disp.at(c, i)
                          : disp.at(c, i) - disp.at(c, i - st[a]);
                const double db =
                    has_b ? disp.at(c, i) - disp.at(c, i - st[a])
                          : disp.at(c, i + st[a]) - disp.at(c, i);
                fwd[c][a] = df;
                bwd[c][a] = db;
            }
        }
        int bad = 0;
        const int combos = 1 << d;
        for (int s = 0; s < combos; ++s) {
            double j[3][3];
            for (int a = 0; a < d; ++a)
                for (int c = 0; c < d; ++c)
                    j[c][a] = ((s >> a) & 1 ? bwd[c][a] : fwd[c][a]) + (c == a ? 1.0 : 0.0);
            double det;
            if (d == 2) {
                det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            } else {
                det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                      j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                      j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            }
            if (det <= 0.0) ++bad;
        }
        ndv_acc += static_cast<double>(bad) / static_cast<double>(combos);
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
    rep.pct_ndv = ndv_acc / static_cast<double>(n);
    return rep;
}

}  // namespace svreg
