#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "svreg/common.hpp"

namespace svreg {

struct ParamSpec {
    std::string name;
    double low = 0.0;
    double high = 1.0;
    bool log_scale = false;
};

struct SearchSpace {
    std::vector<ParamSpec> params;

    void validate() const {
        if (params.empty()) throw input_error("SearchSpace: empty space");
        for (const auto& p : params) {
            if (!(p.low < p.high)) throw input_error("SearchSpace: low must be < high");
            if (p.log_scale && !(p.low > 0.0))
                throw input_error("SearchSpace: log-scale bounds must be positive");
            for (const auto& q : params)
                if (&p != &q && p.name == q.name)
                    throw input_error("SearchSpace: duplicate parameter name " + p.name);
        }
    }
};

enum class TrialState { running, complete, pruned, failed };

struct Trial {
    int id = 0;
    std::map<std::string, double> params;
    std::vector<std::pair<int, double>> intermediates;  // (step, value)
    std::optional<double> final_value;
    TrialState state = TrialState::running;
};

struct SamplerConfig {
    int n_startup = 5;
    double gamma = 0.25;  // good/bad split quantile
    int n_ei_candidates = 24;
};

struct PrunerConfig {
    int n_startup_trials = 5;
    int n_warmup_steps = 30;
    int interval_steps = 10;
};

struct TpeStudy {
    enum class Direction { minimize, maximize };

    Direction direction = Direction::minimize;
    SamplerConfig sampler{};
    PrunerConfig pruner{};
    std::uint64_t seed = 0;
    std::vector<Trial> trials;

    std::vector<const Trial*> completed() const {
        std::vector<const Trial*> out;
        for (const auto& t : trials)
            if (t.state == TrialState::complete && t.final_value &&
                std::isfinite(*t.final_value))
                out.push_back(&t);
        return out;
    }
};

namespace detail {

/// Truncated-Gaussian Parzen mixture over [low, high] (in transformed space).
struct ParzenMixture {
    std::vector<double> mu, sigma;
    double low, high;

    double log_pdf(double x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double z = (x - mu[i]) / sigma[i];
            const double mass =
                norm_cdf((high - mu[i]) / sigma[i]) - norm_cdf((low - mu[i]) / sigma[i]);
            const double pdf = std::exp(-0.5 * z * z) / (std::sqrt(2.0 * M_PI) * sigma[i]);
            acc += pdf / std::max(mass, 1e-12);
        }
        return std::log(std::max(acc / static_cast<double>(mu.size()), 1e-300));
    }

    double sample(Rng& rng) const {
        const std::size_t i = rng.below(mu.size());
        const double pa = norm_cdf((low - mu[i]) / sigma[i]);
        const double pb = norm_cdf((high - mu[i]) / sigma[i]);
        double u = pa + (pb - pa) * rng.uniform01();
        u = std::clamp(u, 1e-15, 1.0 - 1e-15);
        return std::clamp(mu[i] + sigma[i] * norm_inv_cdf(u), low, high);
    }
};

/// Bandwidths from adjacent-point spacing (sorted), clamped to
/// [range / min(100, 1 + n), range]; one wide prior component at the middle.
inline ParzenMixture fit_parzen(std::vector<double> pts, double low, double high) {
    ParzenMixture m;
    m.low = low;
    m.high = high;
    const double range = high - low;
    std::sort(pts.begin(), pts.end());
    const double bw_floor = range / std::min(100.0, 1.0 + static_cast<double>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double left = i == 0 ? pts[i] - low : pts[i] - pts[i - 1];
        const double right = i + 1 == pts.size() ? high - pts[i] : pts[i + 1] - pts[i];
        m.mu.push_back(pts[i]);
        m.sigma.push_back(std::clamp(std::max(left, right), bw_floor, range));
    }
    // uninformative prior component keeps densities positive everywhere
    m.mu.push_back(0.5 * (low + high));
    m.sigma.push_back(range);
    return m;
}

inline double to_internal(const ParamSpec& p, double x) { return p.log_scale ? std::log(x) : x; }
inline double from_internal(const ParamSpec& p, double x) { return p.log_scale ? std::exp(x) : x; }

}  // namespace detail

/// [hyperopt op] TPE suggestion. The first n_startup completed trials use
/// uniform random sampling; afterwards completed trials are split at the
/// gamma quantile into good and bad sets, per-parameter Parzen densities
/// l(x) and g(x) are fitted, n_ei_candidates are drawn from l and the
/// candidate maximizing l(x)/g(x) is returned. Deterministic given the study
/// seed and the trial index.
inline std::map<std::string, double> tpe_suggest(const TpeStudy& study, const SearchSpace& space) {
    space.validate();
    const int trial_id = static_cast<int>(study.trials.size());
    Rng rng(mix_seed(study.seed, 0x747065ULL, static_cast<std::uint64_t>(trial_id)));

    std::map<std::string, double> out;
    auto completed = study.completed();
    if (static_cast<int>(completed.size()) < study.sampler.n_startup) {
        for (const auto& p : space.params) {
            const double lo = detail::to_internal(p, p.low);
            const double hi = detail::to_internal(p, p.high);
            out[p.name] = detail::from_internal(p, rng.uniform(lo, hi));
        }
        return out;
    }

    const bool minimize = study.direction == TpeStudy::Direction::minimize;
    std::sort(completed.begin(), completed.end(), [&](const Trial* a, const Trial* b) {
        return minimize ? *a->final_value < *b->final_value : *a->final_value > *b->final_value;
    });
    const std::size_t n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(study.sampler.gamma * static_cast<double>(completed.size()))));

    for (const auto& p : space.params) {
        const double lo = detail::to_internal(p, p.low);
        const double hi = detail::to_internal(p, p.high);
        std::vector<double> good, bad;
        for (std::size_t i = 0; i < completed.size(); ++i) {
            auto it = completed[i]->params.find(p.name);
            if (it == completed[i]->params.end()) continue;
            (i < n_good ? good : bad).push_back(detail::to_internal(p, it->second));
        }
        if (good.empty() || bad.empty()) {
            out[p.name] = detail::from_internal(p, rng.uniform(lo, hi));
            continue;
        }
        auto l = detail::fit_parzen(good, lo, hi);
        auto g = detail::fit_parzen(bad, lo, hi);
        double best_x = 0.0, best_score = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < study.sampler.n_ei_candidates; ++k) {
            const double x = l.sample(rng);
            const double score = l.log_pdf(x) - g.log_pdf(x);
            if (score > best_score) {
                best_score = score;
                best_x = x;
            }
        }
        out[p.name] = std::clamp(detail::from_internal(p, best_x), p.low, p.high);
    }
    return out;
}

/// [hyperopt op] Median pruning gate: true only after n_startup_trials
/// completed trials, from step n_warmup_steps on, at interval_steps
/// multiples, when the trial's intermediate value at this step is worse than
/// the median of completed trials' values at the same step.
inline bool should_prune(const TpeStudy& study, const Trial& trial, int step) {
    const auto completed = study.completed();
    if (static_cast<int>(completed.size()) < study.pruner.n_startup_trials) return false;
    if (step < study.pruner.n_warmup_steps) return false;
    if (study.pruner.interval_steps > 0 && step % study.pruner.interval_steps != 0) return false;

    double value = 0.0;
    bool found = false;
    for (const auto& [s, v] : trial.intermediates)
        if (s == step) {
            value = v;
            found = true;
        }
    if (!found) throw input_error("should_prune: trial has no intermediate value at this step");

    std::vector<double> peers;
    for (const Trial* t : completed)
        for (const auto& [s, v] : t->intermediates)
            if (s == step) peers.push_back(v);
    if (peers.empty()) return false;
    std::sort(peers.begin(), peers.end());
    const std::size_t m = peers.size();
    const double median =
        m % 2 == 1 ? peers[m / 2] : 0.5 * (peers[m / 2 - 1] + peers[m / 2]);
    return study.direction == TpeStudy::Direction::minimize ? value > median : value < median;
}

/// Thrown by objectives to end a trial early after a positive prune check.
struct TrialPruned {};

/// Reporting surface handed to objectives: records intermediate values and
/// answers prune queries against the study.
class TrialHandle {
public:
    TrialHandle(const TpeStudy& study, Trial& trial) : study_(study), trial_(trial) {}

    void report(int step, double value) { trial_.intermediates.emplace_back(step, value); }

    bool should_prune(int step) const { return ::svreg::should_prune(study_, trial_, step); }

private:
    const TpeStudy& study_;
    Trial& trial_;
};

using Objective = std::function<double(const std::map<std::string, double>&, TrialHandle&)>;
using StudySaveCallback = std::function<void(const TpeStudy&)>;

/// [hyperopt op] Runs trials sequentially until the study holds n_trials,
/// persisting after each one; objective exceptions mark the trial failed and
/// the study continues. Returns the best completed trial.
inline Trial run_study(const Objective& objective, const SearchSpace& space, int n_trials,
                       TpeStudy& study, const StudySaveCallback& save = nullptr) {
    space.validate();
    while (static_cast<int>(study.trials.size()) < n_trials) {
        auto params = tpe_suggest(study, space);
        study.trials.push_back(Trial{static_cast<int>(study.trials.size()), std::move(params),
                                     {}, std::nullopt, TrialState::running});
        Trial& trial = study.trials.back();
        TrialHandle handle(study, trial);
        try {
            const double value = objective(trial.params, handle);
            trial.final_value = value;
            trial.state = TrialState::complete;
        } catch (const TrialPruned&) {
            trial.state = TrialState::pruned;
        } catch (const std::exception&) {
            trial.state = TrialState::failed;
        }
        if (save) save(study);
    }
    const Trial* best = nullptr;
    const bool minimize = study.direction == TpeStudy::Direction::minimize;
    for (const auto& t : study.trials) {
        if (t.state != TrialState::complete || !t.final_value) continue;
        if (!best || (minimize ? *t.final_value < *best->final_value
                               : *t.final_value > *best->final_value))
            best = &t;
    }
    if (!best) throw numerical_error("run_study: no trial completed");
    return *best;
}

// ---------------------------------------------------------------------------
// Study persistence
// ---------------------------------------------------------------------------

inline const char* to_string(TrialState s) {
    switch (s) {
        case TrialState::running: return "running";
        case TrialState::complete: return "complete";
        case TrialState::pruned: return "pruned";
        case TrialState::failed: return "failed";
    }
    return "running";
}

inline TrialState trial_state_from(const std::string& s) {
    if (s == "running") return TrialState::running;
    if (s == "complete") return TrialState::complete;
    if (s == "pruned") return TrialState::pruned;
    if (s == "failed") return TrialState::failed;
    throw input_error("unknown trial state: " + s);
}

inline nlohmann::json study_to_json(const TpeStudy& study) {
    nlohmann::json j;
    j["direction"] = study.direction == TpeStudy::Direction::minimize ? "minimize" : "maximize";
    j["seed"] = study.seed;
    j["sampler"] = {{"n_startup", study.sampler.n_startup},
                    {"gamma", study.sampler.gamma},
                    {"n_ei_candidates", study.sampler.n_ei_candidates}};
    j["pruner"] = {{"n_startup_trials", study.pruner.n_startup_trials},
                   {"n_warmup_steps", study.pruner.n_warmup_steps},
                   {"interval_steps", study.pruner.interval_steps}};
    j["trials"] = nlohmann::json::array();
    for (const auto& t : study.trials) {
        nlohmann::json tj;
        tj["id"] = t.id;
        tj["params"] = t.params;
        tj["intermediates"] = nlohmann::json::array();
        for (const auto& [s, v] : t.intermediates) tj["intermediates"].push_back({s, v});
        if (t.final_value) tj["final"] = *t.final_value;
        tj["state"] = to_string(t.state);
        j["trials"].push_back(std::move(tj));
    }
    return j;
}

inline TpeStudy study_from_json(const nlohmann::json& j) {
    TpeStudy study;
    const std::string dir = j.at("direction").get<std::string>();
    if (dir != "minimize" && dir != "maximize") throw input_error("study: bad direction " + dir);
    study.direction =
        dir == "minimize" ? TpeStudy::Direction::minimize : TpeStudy::Direction::maximize;
    study.seed = j.at("seed").get<std::uint64_t>();
    const auto& sj = j.at("sampler");
    study.sampler.n_startup = sj.at("n_startup").get<int>();
    study.sampler.gamma = sj.at("gamma").get<double>();
    study.sampler.n_ei_candidates = sj.at("n_ei_candidates").get<int>();
    const auto& pj = j.at("pruner");
    study.pruner.n_startup_trials = pj.at("n_startup_trials").get<int>();
    study.pruner.n_warmup_steps = pj.at("n_warmup_steps").get<int>();
    study.pruner.interval_steps = pj.at("interval_steps").get<int>();
    for (const auto& tj : j.at("trials")) {
        Trial t;
        t.id = tj.at("id").get<int>();
        for (auto it = tj.at("params").begin(); it != tj.at("params").end(); ++it)
            t.params[it.key()] = it.value().get<double>();
        for (const auto& iv : tj.at("intermediates"))
            t.intermediates.emplace_back(iv.at(0).get<int>(), iv.at(1).get<double>());
        if (tj.contains("final")) t.final_value = tj.at("final").get<double>();
        t.state = trial_state_from(tj.at("state").get<std::string>());
        study.trials.push_back(std::move(t));
    }
    return study;
}

}  // namespace svreg
