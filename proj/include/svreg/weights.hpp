#pragma once

#include <cmath>

#include "svreg/field.hpp"
#include "svreg/regularizer.hpp"

namespace svreg {

/// Low-resolution pre-activation map z realizing the spatial weight volume:
/// beta prior    lambda = lambda_max * upsample(Sigmoid(z)),
/// Gaussian prior lambda = upsample(ReLU(z)).
struct WeightParams {
    ScalarField z;
    PriorKind prior;
    double resolution_factor = 0.25;
};

/// Grid for z: ceil(full dims * factor) per axis, clamped to >= 2; spacing
/// chosen so the physical extent matches under align-corners mapping.
inline Grid weight_grid(const Grid& full, double factor) {
    if (!(factor > 0.0 && factor <= 1.0))
        throw input_error("weight_grid: resolution factor must be in (0, 1]");
    Grid g;
    g.ndim = full.ndim;
    for (int a = 0; a < full.ndim; ++a) {
        g.dims[a] = std::max(2, static_cast<int>(std::ceil(full.dims[a] * factor)));
        g.spacing[a] = full.spacing[a] * static_cast<double>(full.dims[a] - 1) /
                       static_cast<double>(g.dims[a] - 1);
    }
    return g;
}

inline WeightParams make_weight_params(const Grid& full, const PriorKind& prior, double factor) {
    validate(prior);
    WeightParams wp;
    wp.prior = prior;
    wp.resolution_factor = factor;
    wp.z = ScalarField(weight_grid(full, factor), 0.0);
    // The Gaussian prior starts at its mode (lambda = lambda_mean); the raw
    // field would otherwise begin at the absorbing ReLU boundary.
    if (const auto* n = std::get_if<GaussianPrior>(&prior))
        for (auto& v : wp.z.values) v = n->lambda_mean;
    return wp;
}

struct RealizedWeights {
    ScalarField lambda;       // full resolution, >= 0
    ScalarField lambda_norm;  // beta prior only: upsampled Sigmoid(z) in [0, 1]
};

/// [optimize op] Realizes the spatial weight volume from z: activation at low
/// resolution, then align-corners linear upsampling.
inline RealizedWeights realize_weights(const WeightParams& wp, const Grid& full) {
    validate(wp.prior);
    RealizedWeights out;
    ScalarField act(wp.z.grid);
    if (const auto* b = std::get_if<BetaPrior>(&wp.prior)) {
        for (std::size_t i = 0; i < wp.z.size(); ++i)
            act.values[i] = 1.0 / (1.0 + std::exp(-wp.z.values[i]));
        out.lambda_norm = upsample_linear(act, full);
        out.lambda = out.lambda_norm;
        for (auto& v : out.lambda.values) v *= b->lambda_max;
    } else {
        for (std::size_t i = 0; i < wp.z.size(); ++i)
            act.values[i] = std::max(wp.z.values[i], 0.0);
        out.lambda = upsample_linear(act, full);
    }
    return out;
}

/// Gradient of the realized weights with respect to z. grad_lambda is the
/// full-resolution gradient w.r.t. lambda; grad_lambda_norm (beta prior only)
/// the gradient w.r.t. the normalized weights. Either may be null.
inline ScalarField weights_backprop(const WeightParams& wp, const Grid& full,
                                    const ScalarField* grad_lambda,
                                    const ScalarField* grad_lambda_norm) {
    ScalarField grad_z(wp.z.grid, 0.0);
    if (const auto* b = std::get_if<BetaPrior>(&wp.prior)) {
        ScalarField ds_full(full, 0.0);
        if (grad_lambda)
            for (std::size_t i = 0; i < ds_full.size(); ++i)
                ds_full.values[i] += b->lambda_max * grad_lambda->values[i];
        if (grad_lambda_norm)
            for (std::size_t i = 0; i < ds_full.size(); ++i)
                ds_full.values[i] += grad_lambda_norm->values[i];
        auto ds_low = upsample_linear_adjoint(ds_full, wp.z.grid);
        for (std::size_t i = 0; i < grad_z.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-wp.z.values[i]));
            grad_z.values[i] = ds_low.values[i] * s * (1.0 - s);
        }
    } else {
        if (grad_lambda_norm)
            throw input_error("weights_backprop: lambda_norm gradient only applies to the beta prior");
        if (grad_lambda) {
            auto ds_low = upsample_linear_adjoint(*grad_lambda, wp.z.grid);
            for (std::size_t i = 0; i < grad_z.size(); ++i)
                grad_z.values[i] = wp.z.values[i] > 0.0 ? ds_low.values[i] : 0.0;
        }
    }
    return grad_z;
}

}  // namespace svreg
