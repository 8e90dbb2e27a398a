#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <vector>

#include "svreg/loss.hpp"

namespace svreg {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// [optimize op] Textbook bias-corrected Adam update, in place. t is the
/// 1-based step index.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const AdamConfig& cfg, int t) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw input_error("adam_step: shape mismatch");
    if (t < 1) throw input_error("adam_step: t must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

/// [optimize op] Central-difference check of an analytic gradient at n_probes
/// random coordinates; returns the max relative error with a 1e-6 floor on
/// the denominator.
inline double gradient_check(const std::function<double(const std::vector<double>&)>& loss,
                             const std::vector<double>& analytic_grad,
                             const std::vector<double>& params, double eps = 1e-5,
                             int n_probes = 30, std::uint64_t seed = 1234) {
    if (analytic_grad.size() != params.size()) throw input_error("gradient_check: shape mismatch");
    Rng rng(seed);
    std::vector<double> x = params;
    double worst = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        const std::size_t i = rng.below(params.size());
        const double x0 = x[i];
        x[i] = x0 + eps;
        const double fp = loss(x);
        x[i] = x0 - eps;
        const double fm = loss(x);
        x[i] = x0;
        const double num = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(num), std::abs(analytic_grad[i]), 1e-6});
        worst = std::max(worst, std::abs(num - analytic_grad[i]) / denom);
    }
    return worst;
}

struct RegistrationResult {
    VectorField velocity;
    VectorField displacement;          // exp(v)
    VectorField inverse_displacement;  // exp(-v)
    ScalarField lambda;
    std::vector<LossTerms> loss_trace;
    JacobianReport jacobian;
    double wall_seconds = 0.0;
};

/// Per-pair MAP registration: Adam jointly optimizes the velocity field and
/// the low-resolution weight pre-activations against the total loss. Exposed
/// as a steppable object so tuning can interleave scenario registrations and
/// report intermediate metrics.
class InstanceRegistration {
public:
    InstanceRegistration(ScalarField moving, ScalarField fixed, RegistrationConfig cfg,
                         std::optional<LabelStack> moving_labels = std::nullopt,
                         std::optional<LabelStack> fixed_labels = std::nullopt)
        : moving_(std::move(moving)),
          fixed_(std::move(fixed)),
          cfg_(std::move(cfg)),
          moving_labels_(std::move(moving_labels)),
          fixed_labels_(std::move(fixed_labels)) {
        cfg_.validate();
        require_same_grid(moving_.grid, fixed_.grid, "register");
        for (const auto* img : {&moving_, &fixed_})
            for (double x : img->values)
                if (!(x >= 0.0 && x <= 1.0))
                    throw input_error("register: intensities must be normalized to [0, 1]");
        v_ = VectorField(moving_.grid, 0.0);
        wp_ = make_weight_params(moving_.grid, cfg_.prior, cfg_.lambda_resolution_factor);
        if (cfg_.uniform_lambda) lambda_fixed_ = ScalarField(moving_.grid, *cfg_.uniform_lambda);
        adam_v_ = AdamState(v_.data.size());
        adam_z_ = AdamState(wp_.z.size());
    }

    LossTerms step() {
        const auto t0 = std::chrono::steady_clock::now();
        auto r = total_loss(fixed_, moving_, v_, wp_, cfg_,
                            moving_labels_ ? &*moving_labels_ : nullptr,
                            fixed_labels_ ? &*fixed_labels_ : nullptr,
                            cfg_.uniform_lambda ? &lambda_fixed_ : nullptr);
        lambda_ = std::move(r.lambda);
        ++t_;
        adam_step(std::span<double>(v_.data), std::span<const double>(r.grad_v.data), adam_v_,
                  cfg_.adam, t_);
        if (!cfg_.uniform_lambda)
            adam_step(std::span<double>(wp_.z.values), std::span<const double>(r.grad_z.values),
                      adam_z_, cfg_.adam, t_);
        trace_.push_back(r.terms);
        wall_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r.terms;
    }

    int iterations_done() const { return t_; }
    const std::vector<LossTerms>& trace() const { return trace_; }
    const RegistrationConfig& config() const { return cfg_; }
    const VectorField& velocity() const { return v_; }
    const ScalarField& lambda() const { return lambda_; }
    VectorField displacement() const { return exponentiate(v_, cfg_.n_squaring); }

    RegistrationResult finalize() const {
        RegistrationResult res;
        res.velocity = v_;
        res.displacement = exponentiate(v_, cfg_.n_squaring);
        VectorField vneg = v_;
        for (auto& x : vneg.data) x = -x;
        res.inverse_displacement = exponentiate(vneg, cfg_.n_squaring);
        if (cfg_.uniform_lambda) {
            res.lambda = lambda_fixed_;
        } else {
            res.lambda = realize_weights(wp_, moving_.grid).lambda;
        }
        res.loss_trace = trace_;
        res.jacobian = fold_metrics(res.displacement);
        res.wall_seconds = wall_;
        return res;
    }

private:
    ScalarField moving_, fixed_;
    RegistrationConfig cfg_;
    std::optional<LabelStack> moving_labels_, fixed_labels_;
    VectorField v_;
    WeightParams wp_;
    ScalarField lambda_fixed_;
    ScalarField lambda_;
    AdamState adam_v_{0}, adam_z_{0};
    std::vector<LossTerms> trace_;
    int t_ = 0;
    double wall_ = 0.0;
};

/// [optimize op] Runs cfg.iterations steps and packages the result.
inline RegistrationResult register_pair(const ScalarField& moving, const ScalarField& fixed,
                                        const RegistrationConfig& cfg,
                                        std::optional<LabelStack> moving_labels = std::nullopt,
                                        std::optional<LabelStack> fixed_labels = std::nullopt) {
    InstanceRegistration reg(moving, fixed, cfg, std::move(moving_labels),
                             std::move(fixed_labels));
    for (int i = 0; i < cfg.iterations; ++i) reg.step();
    return reg.finalize();
}

}  // namespace svreg
