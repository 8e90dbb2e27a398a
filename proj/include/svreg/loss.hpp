#pragma once

#include <optional>
#include <string>

#include "svreg/diffeo.hpp"
#include "svreg/regularizer.hpp"
#include "svreg/similarity.hpp"
#include "svreg/weights.hpp"

namespace svreg {

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct RegistrationConfig {
    NccConfig ncc{};
    PriorKind prior = BetaPrior{0.1, 1.0};
    int n_squaring = 7;
    int iterations = 400;
    AdamConfig adam{};
    double lambda_resolution_factor = 0.25;
    double dice_weight = 0.0;
    std::uint64_t seed = 0;
    // Spatially invariant baseline: lambda held constant at this value, the
    // hyperprior term dropped and z excluded from the optimization.
    std::optional<double> uniform_lambda;

    void validate() const {
        ncc.validate();
        ::svreg::validate(prior);
        if (n_squaring < 0) throw input_error("RegistrationConfig: n_squaring must be >= 0");
        if (iterations < 1) throw input_error("RegistrationConfig: iterations must be >= 1");
        if (!(adam.lr > 0.0)) throw input_error("RegistrationConfig: learning rate must be > 0");
        if (dice_weight < 0.0) throw input_error("RegistrationConfig: dice_weight must be >= 0");
        if (!(lambda_resolution_factor > 0.0 && lambda_resolution_factor <= 1.0))
            throw input_error("RegistrationConfig: lambda_resolution_factor must be in (0, 1]");
        if (uniform_lambda && *uniform_lambda < 0.0)
            throw input_error("RegistrationConfig: uniform_lambda must be >= 0");
    }
};

struct LossTerms {
    double total = 0.0;
    double ncc = 0.0;
    double diffusion = 0.0;
    double prior = 0.0;
    double dice = 0.0;
};

struct TotalLossResult {
    LossTerms terms;
    VectorField grad_v;
    ScalarField grad_z;   // empty in uniform-lambda mode
    ScalarField lambda;   // realized weight volume used for this evaluation
};

namespace detail {

/// Warp plus the spatial derivative of the interpolant at each sample point;
/// the derivative is what chains the data term into the displacement.
inline void warp_with_spatial_grad(const double* vals, const Grid& g, const VectorField& disp,
                                   double* warped, VectorField& dwarp) {
    const int d = g.ndim;
    const std::size_t n = g.voxel_count();
    std::array<int, 3> p{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double x[3], grad[3];
        for (int a = 0; a < d; ++a) x[a] = static_cast<double>(p[a]) + disp.at(a, i);
        warped[i] = sample_point(vals, g, x, grad);
        for (int a = 0; a < d; ++a) dwarp.at(a, i) = grad[a];
        for (int a = d - 1; a >= 0; --a) {
            if (++p[a] < g.dims[a]) break;
            p[a] = 0;
        }
    }
}

inline void check_term_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw numerical_error(std::string("non-finite loss term: ") + term);
}

}  // namespace detail

/// [regularizer op] The full objective
///   sigma_I * NCC + weighted diffusion on v + hyperprior penalty
///   [+ dice_weight * soft Dice]
/// with gradients chained through exponentiation, warping, activation and
/// upsampling. When lambda_override is given, the weight volume is fixed and
/// the prior term (and z gradient) is dropped.
inline TotalLossResult total_loss(const ScalarField& fixed, const ScalarField& moving,
                                  const VectorField& v, const WeightParams& wp,
                                  const RegistrationConfig& cfg,
                                  const LabelStack* moving_labels = nullptr,
                                  const LabelStack* fixed_labels = nullptr,
                                  const ScalarField* lambda_override = nullptr) {
    cfg.validate();
    require_same_grid(fixed.grid, moving.grid, "total_loss");
    require_same_grid(fixed.grid, v.grid, "total_loss");
    const Grid& g = fixed.grid;
    const int d = g.ndim;
    const std::size_t n = g.voxel_count();

    TotalLossResult res;

    RealizedWeights rw;
    if (lambda_override) {
        require_same_grid(lambda_override->grid, g, "total_loss");
        res.lambda = *lambda_override;
    } else {
        rw = realize_weights(wp, g);
        res.lambda = rw.lambda;
    }

    // data term through the exponentiated velocity
    VectorField u = exponentiate(v, cfg.n_squaring);
    ScalarField warped(g);
    VectorField dwarp(g);
    detail::warp_with_spatial_grad(moving.values.data(), g, u, warped.values.data(), dwarp);

    auto ncc = ncc_loss(fixed, warped, cfg.ncc);
    res.terms.ncc = cfg.ncc.sigma_i * ncc.energy;
    detail::check_term_finite(res.terms.ncc, "ncc");

    VectorField grad_u(g, 0.0);
    for (int a = 0; a < d; ++a)
        for (std::size_t i = 0; i < n; ++i)
            grad_u.at(a, i) = cfg.ncc.sigma_i * ncc.adjoint.values[i] * dwarp.at(a, i);

    // optional label guidance
    if (cfg.dice_weight > 0.0 && moving_labels && fixed_labels) {
        if (moving_labels->classes != fixed_labels->classes)
            throw input_error("total_loss: label class-count mismatch");
        require_same_grid(moving_labels->grid, g, "total_loss labels");
        require_same_grid(fixed_labels->grid, g, "total_loss labels");
        LabelStack warped_stack(g, moving_labels->classes);
        std::vector<VectorField> dstack;
        dstack.reserve(moving_labels->classes);
        for (int k = 0; k < moving_labels->classes; ++k) {
            dstack.emplace_back(g);
            detail::warp_with_spatial_grad(moving_labels->channel(k), g, u,
                                           warped_stack.channel(k), dstack.back());
        }
        auto dice = soft_dice_loss(warped_stack, *fixed_labels);
        res.terms.dice = cfg.dice_weight * dice.energy;
        detail::check_term_finite(res.terms.dice, "dice");
        for (int k = 0; k < moving_labels->classes; ++k) {
            const double* adj = dice.adjoint.channel(k);
            for (int a = 0; a < d; ++a)
                for (std::size_t i = 0; i < n; ++i)
                    grad_u.at(a, i) += cfg.dice_weight * adj[i] * dstack[k].at(a, i);
        }
    }

    // regularization on the velocity field
    auto diff = weighted_diffusion(v, res.lambda);
    res.terms.diffusion = diff.energy;
    detail::check_term_finite(res.terms.diffusion, "diffusion");

    // hyperprior penalty on the realized weights
    ScalarField grad_z;
    if (!lambda_override) {
        if (const auto* b = std::get_if<BetaPrior>(&wp.prior)) {
            auto pen = beta_penalty(rw.lambda_norm, b->alpha_prime);
            res.terms.prior = pen.energy;
            grad_z = weights_backprop(wp, g, &diff.grad_lam, &pen.grad);
        } else {
            const auto& gp = std::get<GaussianPrior>(wp.prior);
            auto pen = gaussian_penalty(rw.lambda, gp.sigma_prime, gp.lambda_mean);
            res.terms.prior = pen.energy;
            ScalarField grad_lam = diff.grad_lam;
            for (std::size_t i = 0; i < n; ++i) grad_lam.values[i] += pen.grad.values[i];
            grad_z = weights_backprop(wp, g, &grad_lam, nullptr);
        }
        detail::check_term_finite(res.terms.prior, "prior");
    }

    res.grad_v = exponentiate_with_adjoint(v, cfg.n_squaring, grad_u);
    for (std::size_t i = 0; i < res.grad_v.data.size(); ++i)
        res.grad_v.data[i] += diff.grad_u.data[i];
    res.grad_z = std::move(grad_z);

    res.terms.total = res.terms.ncc + res.terms.diffusion + res.terms.prior + res.terms.dice;
    detail::check_term_finite(res.terms.total, "total");
    if (!all_finite(res.grad_v.data)) throw numerical_error("non-finite gradient: velocity");
    if (!res.grad_z.values.empty() && !all_finite(res.grad_z.values))
        throw numerical_error("non-finite gradient: weights");
    return res;
}

}  // namespace svreg
