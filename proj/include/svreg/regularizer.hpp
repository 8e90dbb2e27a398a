#pragma once

#include <cmath>
#include <variant>
#include <vector>

#include "svreg/field.hpp"

namespace svreg {

/// Hyperprior over the spatial weight volume. The beta prior bounds weights
/// in [0, lambda_max] and penalizes small normalized weights; the Gaussian
/// prior pulls weights toward lambda_mean with strength sigma_prime.
struct BetaPrior {
    double alpha_prime = 0.0;  // alpha - 1, >= 0
    double lambda_max = 1.0;   // >= 0 (0 disables regularization entirely)
};

struct GaussianPrior {
    double sigma_prime = 0.0;  // 1/(2 sigma^2), >= 0
    double lambda_mean = 1.0;  // > 0
};

using PriorKind = std::variant<BetaPrior, GaussianPrior>;

inline void validate(const PriorKind& prior) {
    if (const auto* b = std::get_if<BetaPrior>(&prior)) {
        if (b->alpha_prime < 0.0) throw input_error("BetaPrior: alpha_prime must be >= 0");
        if (b->lambda_max < 0.0) throw input_error("BetaPrior: lambda_max must be >= 0");
    } else {
        const auto& n = std::get<GaussianPrior>(prior);
        if (n.sigma_prime < 0.0) throw input_error("GaussianPrior: sigma_prime must be >= 0");
        if (!(n.lambda_mean > 0.0)) throw input_error("GaussianPrior: lambda_mean must be > 0");
    }
}

struct DiffusionResult {
    double energy = 0.0;
    VectorField grad_u;
    ScalarField grad_lam;
};

/// [regularizer op] Spatially weighted diffusion energy
///   (1/|Omega|) sum_p lam(p) sum_a |u(p+e_a) - u(p)|^2
/// with forward differences; terms without a forward neighbor are skipped.
/// Gradients with respect to both u and lam are exact.
inline DiffusionResult weighted_diffusion(const VectorField& u, const ScalarField& lam) {
    require_same_grid(u.grid, lam.grid, "weighted_diffusion");
    for (double v : lam.values)
        if (v < 0.0) throw input_error("weighted_diffusion: negative lambda");
    const Grid& g = u.grid;
    const auto st = g.strides();
    const std::size_t n = g.voxel_count();
    const double inv_n = 1.0 / static_cast<double>(n);

    DiffusionResult res;
    res.grad_u = VectorField(g, 0.0);
    res.grad_lam = ScalarField(g, 0.0);
    double acc = 0.0;
    for (int c = 0; c < g.ndim; ++c) {
        const double* uc = u.component(c);
        double* gc = res.grad_u.component(c);
        std::array<int, 3> p{0, 0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            for (int a = 0; a < g.ndim; ++a) {
                if (p[a] + 1 >= g.dims[a]) continue;
                const std::size_t j = i + st[a];
                const double diff = uc[j] - uc[i];
                const double w = lam.values[i];
                acc += w * diff * diff;
                res.grad_lam.values[i] += diff * diff * inv_n;
                const double gd = 2.0 * w * diff * inv_n;
                gc[i] -= gd;
                gc[j] += gd;
            }
            for (int b = g.ndim - 1; b >= 0; --b) {
                if (++p[b] < g.dims[b]) break;
                p[b] = 0;
            }
        }
    }
    res.energy = acc * inv_n;
    return res;
}

/// [regularizer op] Dense weighted graph Laplacian D - A with symmetric
/// forward-edge weights A[p, p+e_a] = lam(p). Test oracle for the quadratic
/// form identity; rejected on grids larger than 1000 voxels.
inline std::vector<double> build_laplacian_dense(const ScalarField& lam) {
    const Grid& g = lam.grid;
    const std::size_t n = g.voxel_count();
    if (n > 1000) throw input_error("build_laplacian_dense: grid too large (oracle only)");
    const auto st = g.strides();
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = g.coords(i);
        for (int a = 0; a < g.ndim; ++a) {
            if (p[a] + 1 >= g.dims[a]) continue;
            const std::size_t j = i + st[a];
            const double w = lam.values[i];
            m[i * n + j] -= w;
            m[j * n + i] -= w;
            m[i * n + i] += w;
            m[j * n + j] += w;
        }
    }
    return m;
}

struct PenaltyResult {
    double energy = 0.0;
    ScalarField grad;
};

/// [regularizer op] Power-function (beta, beta=1) negative log-prior on the
/// normalized weights lam/lambda_max in (0, 1]:
///   -(alpha'/|Omega|) sum_p log lam_norm(p).
/// Values below the floor delta are clamped inside the log so Sigmoid
/// underflow cannot produce -inf.
inline PenaltyResult beta_penalty(const ScalarField& lam_norm, double alpha_prime,
                                  double floor_delta = 1e-7) {
    if (alpha_prime < 0.0) throw input_error("beta_penalty: alpha_prime must be >= 0");
    const std::size_t n = lam_norm.grid.voxel_count();
    const double scale = alpha_prime / static_cast<double>(n);
    PenaltyResult res;
    res.grad = ScalarField(lam_norm.grid, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = lam_norm.values[i];
        if (v < 0.0 || v > 1.0) throw input_error("beta_penalty: lam_norm outside [0, 1]");
        if (v > floor_delta) {
            acc -= std::log(v);
            res.grad.values[i] = -scale / v;
        } else {
            acc -= std::log(floor_delta);
        }
    }
    res.energy = scale * acc;
    return res;
}

/// [regularizer op] Truncated-normal negative log-prior:
///   (sigma'/|Omega|) sum_p (lam(p)/lambda_mean - 1)^2.
inline PenaltyResult gaussian_penalty(const ScalarField& lam, double sigma_prime,
                                      double lambda_mean) {
    if (sigma_prime < 0.0) throw input_error("gaussian_penalty: sigma_prime must be >= 0");
    if (!(lambda_mean > 0.0)) throw input_error("gaussian_penalty: lambda_mean must be > 0");
    const std::size_t n = lam.grid.voxel_count();
    const double inv_n = 1.0 / static_cast<double>(n);
    PenaltyResult res;
    res.grad = ScalarField(lam.grid, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = lam.values[i] / lambda_mean - 1.0;
        acc += r * r;
        res.grad.values[i] = 2.0 * sigma_prime * r * inv_n / lambda_mean;
    }
    res.energy = sigma_prime * acc * inv_n;
    return res;
}

}  // namespace svreg
