#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "svreg/field.hpp"

namespace svreg {

/// Local NCC settings. sigma_I weights the data term in the total loss.
struct NccConfig {
    int window = 9;         // odd, per axis
    double epsilon = 1e-5;  // variance guard in the correlation denominator
    double sigma_i = 1.0;

    void validate() const {
        if (window < 1 || window % 2 == 0) throw input_error("NccConfig: window must be odd and >= 1");
        if (!(epsilon > 0.0)) throw input_error("NccConfig: epsilon must be positive");
        if (!(sigma_i > 0.0)) throw input_error("NccConfig: sigma_I must be positive");
    }
};

namespace detail {

/// Moving-window sum along every axis with windows truncated at the borders
/// (clamped neighborhoods, no padding). Implemented per axis via prefix sums,
/// sequential per axis so results do not depend on scheduling.
inline void box_sum_inplace(const Grid& g, std::vector<double>& a, int radius,
                            std::vector<double>& scratch) {
    const auto st = g.strides();
    for (int axis = 0; axis < g.ndim; ++axis) {
        const int len = g.dims[axis];
        const std::size_t stride = st[axis];
        const std::size_t n = g.voxel_count();
        const std::size_t lines = n / static_cast<std::size_t>(len);
        scratch.resize(static_cast<std::size_t>(len) + 1);
        for (std::size_t line = 0; line < lines; ++line) {
            // base index of the line: mixed-radix decode over non-axis dims
            std::size_t base = 0;
            std::size_t rem = line;
            for (int b = g.ndim - 1; b >= 0; --b) {
                if (b == axis) continue;
                const std::size_t db = static_cast<std::size_t>(g.dims[b]);
                base += (rem % db) * st[b];
                rem /= db;
            }
            scratch[0] = 0.0;
            for (int i = 0; i < len; ++i)
                scratch[i + 1] = scratch[i] + a[base + static_cast<std::size_t>(i) * stride];
            for (int i = 0; i < len; ++i) {
                const int lo = std::max(0, i - radius);
                const int hi = std::min(len - 1, i + radius);
                a[base + static_cast<std::size_t>(i) * stride] = scratch[hi + 1] - scratch[lo];
            }
        }
    }
}

}  // namespace detail

/// Sum of `in` over the clamped window (radius per axis) centered at each voxel.
inline std::vector<double> box_sum(const Grid& g, const std::vector<double>& in, int radius) {
    std::vector<double> out = in;
    std::vector<double> scratch;
    detail::box_sum_inplace(g, out, radius, scratch);
    return out;
}

struct NccResult {
    double energy = 0.0;   // -(1/|Omega|) sum of windowed Pearson correlations
    ScalarField adjoint;   // d(energy)/d(warped)
};

/// [similarity op] Windowed local NCC between fixed and warped, averaged over
/// voxels, with the epsilon-guarded denominator max(sigma_f * sigma_w, eps).
/// Constant windows yield correlation 0. The adjoint is exact for the
/// implemented formula:
///   d cc(p)/dw(q) = (f_q - mf)/(n D) - [guard inactive] cov sf (w_q - mw)/(n sw D^2)
/// summed over windows p containing q; the window relation is symmetric, so
/// each sum is itself a box sum of per-center coefficient fields.
inline NccResult ncc_loss(const ScalarField& fixed, const ScalarField& warped,
                          const NccConfig& cfg) {
    cfg.validate();
    require_same_grid(fixed.grid, warped.grid, "ncc_loss");
    const Grid& g = fixed.grid;
    const std::size_t n = g.voxel_count();
    const int radius = cfg.window / 2;

    std::vector<double> scratch;
    std::vector<double> cnt(n, 1.0);
    detail::box_sum_inplace(g, cnt, radius, scratch);

    std::vector<double> sf = fixed.values;
    std::vector<double> sw = warped.values;
    std::vector<double> sff(n), sww(n), sfw(n);
    for (std::size_t i = 0; i < n; ++i) {
        sff[i] = fixed.values[i] * fixed.values[i];
        sww[i] = warped.values[i] * warped.values[i];
        sfw[i] = fixed.values[i] * warped.values[i];
    }
    detail::box_sum_inplace(g, sf, radius, scratch);
    detail::box_sum_inplace(g, sw, radius, scratch);
    detail::box_sum_inplace(g, sff, radius, scratch);
    detail::box_sum_inplace(g, sww, radius, scratch);
    detail::box_sum_inplace(g, sfw, radius, scratch);

    // Per-center coefficients for the adjoint scatter.
    std::vector<double> coef_a(n), coef_amf(n), coef_b(n), coef_bmw(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = cnt[i];
        const double mf = sf[i] / m;
        const double mw = sw[i] / m;
        const double cov = sfw[i] / m - mf * mw;
        const double vf = std::max(sff[i] / m - mf * mf, 0.0);
        const double vw = std::max(sww[i] / m - mw * mw, 0.0);
        const double sigf = std::sqrt(vf);
        const double sigw = std::sqrt(vw);
        const double prod = sigf * sigw;
        const double denom = std::max(prod, cfg.epsilon);
        acc += cov / denom;

        const double a = 1.0 / (m * denom);
        coef_a[i] = a;
        coef_amf[i] = a * mf;
        if (prod > cfg.epsilon) {
            const double b = cov * sigf / (m * sigw * denom * denom);
            coef_b[i] = b;
            coef_bmw[i] = b * mw;
        } else {
            coef_b[i] = 0.0;
            coef_bmw[i] = 0.0;
        }
    }
    detail::box_sum_inplace(g, coef_a, radius, scratch);
    detail::box_sum_inplace(g, coef_amf, radius, scratch);
    detail::box_sum_inplace(g, coef_b, radius, scratch);
    detail::box_sum_inplace(g, coef_bmw, radius, scratch);

    NccResult res;
    const double inv_n = 1.0 / static_cast<double>(n);
    res.energy = -acc * inv_n;
    res.adjoint = ScalarField(g);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = fixed.values[i] * coef_a[i] - coef_amf[i] -
                         warped.values[i] * coef_b[i] + coef_bmw[i];
        res.adjoint.values[i] = -d * inv_n;
    }
    return res;
}

/// One-hot (or soft) label stack: channel k of voxel i at values[k*n + i].
struct LabelStack {
    Grid grid;
    int classes = 0;
    std::vector<double> values;

    LabelStack() = default;
    LabelStack(const Grid& g, int k) : grid(g), classes(k), values(g.voxel_count() * k, 0.0) {}

    double* channel(int k) { return values.data() + static_cast<std::size_t>(k) * grid.voxel_count(); }
    const double* channel(int k) const {
        return values.data() + static_cast<std::size_t>(k) * grid.voxel_count();
    }
};

struct DiceResult {
    double energy = 0.0;
    LabelStack adjoint;  // d(energy)/d(warped stack)
};

/// [similarity op] Soft Dice loss over class channels:
/// 1 - mean_k 2*sum(a b) / (sum a + sum b + eps), adjoint w.r.t. the first stack.
inline DiceResult soft_dice_loss(const LabelStack& warped, const LabelStack& fixed,
                                 double eps = 1e-6) {
    if (warped.classes != fixed.classes)
        throw input_error("soft_dice_loss: class-count mismatch");
    require_same_grid(warped.grid, fixed.grid, "soft_dice_loss");
    const std::size_t n = warped.grid.voxel_count();
    const int k = warped.classes;
    DiceResult res;
    res.adjoint = LabelStack(warped.grid, k);
    double mean = 0.0;
    for (int c = 0; c < k; ++c) {
        const double* a = warped.channel(c);
        const double* b = fixed.channel(c);
        double inter = 0.0, sa = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += a[i] * b[i];
            sa += a[i];
            sb += b[i];
        }
        const double denom = sa + sb + eps;
        mean += 2.0 * inter / denom;
        double* adj = res.adjoint.channel(c);
        const double scale = -1.0 / static_cast<double>(k);
        for (std::size_t i = 0; i < n; ++i)
            adj[i] = scale * (2.0 * b[i] * denom - 2.0 * inter) / (denom * denom);
    }
    res.energy = 1.0 - mean / static_cast<double>(k);
    return res;
}

}  // namespace svreg
