#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "svreg/field.hpp"
#include "svreg/optimize.hpp"

namespace svreg {

/// Physical-coordinate landmarks (mm). For 2D sets the third component is 0.
struct LandmarkSet {
    int ndim = 3;
    std::vector<std::array<double, 3>> points_mm;
    std::vector<std::string> names;  // optional, parallel to points

    void validate() const {
        if (ndim != 2 && ndim != 3) throw input_error("LandmarkSet: ndim must be 2 or 3");
        for (const auto& p : points_mm)
            for (int a = 0; a < ndim; ++a)
                if (!std::isfinite(p[a])) throw input_error("LandmarkSet: non-finite coordinate");
    }
};

struct DiceScores {
    std::map<int, std::optional<double>> per_class;  // nullopt when both sets are empty
    double mean = 0.0;                               // over defined classes only
    int defined_classes = 0;
};

/// [eval op] Hard Dice overlap per class; classes absent from both maps are
/// reported as undefined and excluded from the mean.
inline DiceScores dice(const IntField& a, const IntField& b, const std::vector<int>& classes) {
    require_same_grid(a.grid, b.grid, "dice");
    DiceScores out;
    double acc = 0.0;
    for (int k : classes) {
        std::size_t na = 0, nb = 0, ninter = 0;
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            const bool ia = a.values[i] == k;
            const bool ib = b.values[i] == k;
            na += ia;
            nb += ib;
            ninter += ia && ib;
        }
        if (na + nb == 0) {
            out.per_class[k] = std::nullopt;
            continue;
        }
        const double score = 2.0 * static_cast<double>(ninter) / static_cast<double>(na + nb);
        out.per_class[k] = score;
        acc += score;
        ++out.defined_classes;
    }
    out.mean = out.defined_classes > 0 ? acc / out.defined_classes : 0.0;
    return out;
}

/// Distinct labels present in either map, sorted.
inline std::vector<int> label_classes(const IntField& a, const IntField& b) {
    std::vector<int> classes;
    for (const auto* f : {&a, &b})
        for (int v : f->values)
            if (std::find(classes.begin(), classes.end(), v) == classes.end())
                classes.push_back(v);
    std::sort(classes.begin(), classes.end());
    return classes;
}

struct TreResult {
    std::vector<double> distances_mm;   // per included landmark pair
    std::vector<std::size_t> excluded;  // indices of out-of-domain landmarks
    double mean = 0.0;
    double max = 0.0;
};

/// [eval op] Target registration error: each fixed landmark, converted to
/// voxel units, is mapped by x + disp(x) (disp resamples moving into fixed
/// space) and compared in mm against its paired moving landmark. Landmarks
/// outside the grid are excluded and counted.
inline TreResult tre(const LandmarkSet& moving_lms, const LandmarkSet& fixed_lms,
                     const VectorField& disp) {
    moving_lms.validate();
    fixed_lms.validate();
    if (moving_lms.points_mm.size() != fixed_lms.points_mm.size())
        throw input_error("tre: landmark sets must be paired");
    const Grid& g = disp.grid;
    if (moving_lms.ndim != g.ndim || fixed_lms.ndim != g.ndim)
        throw input_error("tre: landmark/grid dimensionality mismatch");

    TreResult out;
    for (std::size_t i = 0; i < fixed_lms.points_mm.size(); ++i) {
        double x_vox[3] = {0.0, 0.0, 0.0};
        bool inside = true;
        for (int a = 0; a < g.ndim; ++a) {
            x_vox[a] = fixed_lms.points_mm[i][a] / g.spacing[a];
            inside = inside && x_vox[a] >= 0.0 && x_vox[a] <= g.dims[a] - 1;
        }
        if (!inside) {
            out.excluded.push_back(i);
            continue;
        }
        double d2 = 0.0;
        for (int a = 0; a < g.ndim; ++a) {
            const double u = sample_point(disp.component(a), g, x_vox);
            const double mapped_mm = (x_vox[a] + u) * g.spacing[a];
            const double diff = mapped_mm - moving_lms.points_mm[i][a];
            d2 += diff * diff;
        }
        out.distances_mm.push_back(std::sqrt(d2));
    }
    for (double d : out.distances_mm) {
        out.mean += d;
        out.max = std::max(out.max, d);
    }
    if (!out.distances_mm.empty()) out.mean /= static_cast<double>(out.distances_mm.size());
    return out;
}

inline nlohmann::json prior_to_json(const PriorKind& prior) {
    nlohmann::json j;
    if (const auto* b = std::get_if<BetaPrior>(&prior)) {
        j["kind"] = "beta";
        j["alpha_prime"] = b->alpha_prime;
        j["lambda_max"] = b->lambda_max;
    } else {
        const auto& n = std::get<GaussianPrior>(prior);
        j["kind"] = "gaussian";
        j["sigma_prime"] = n.sigma_prime;
        j["lambda_mean"] = n.lambda_mean;
    }
    return j;
}

/// [eval op] Structured registration summary: metric values, loss trace
/// summary, hyperparameters used, timings. Stable key names; round-trips
/// through JSON losslessly.
inline nlohmann::json make_report(const RegistrationResult& result, const RegistrationConfig& cfg,
                                  const std::optional<DiceScores>& dice_scores = std::nullopt,
                                  const std::optional<TreResult>& tre_result = std::nullopt) {
    nlohmann::json j;
    j["settings"] = {{"prior", prior_to_json(cfg.prior)},
                     {"iterations", cfg.iterations},
                     {"n_squaring", cfg.n_squaring},
                     {"learning_rate", cfg.adam.lr},
                     {"lambda_resolution_factor", cfg.lambda_resolution_factor},
                     {"ncc_window", cfg.ncc.window},
                     {"sigma_i", cfg.ncc.sigma_i},
                     {"dice_weight", cfg.dice_weight},
                     {"seed", cfg.seed}};
    if (cfg.uniform_lambda) j["settings"]["uniform_lambda"] = *cfg.uniform_lambda;

    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : result.loss_trace) best = std::min(best, t.total);
    const auto& last = result.loss_trace.back();
    j["loss"] = {{"initial", result.loss_trace.front().total},
                 {"final", last.total},
                 {"best", best},
                 {"final_terms",
                  {{"ncc", last.ncc},
                   {"diffusion", last.diffusion},
                   {"prior", last.prior},
                   {"dice", last.dice}}},
                 {"iterations", result.loss_trace.size()}};

    j["metrics"] = {{"pct_nonpos_jacobian", result.jacobian.pct_nonpos_j},
                    {"pct_ndv", result.jacobian.pct_ndv},
                    {"min_jacobian", result.jacobian.min_j}};
    if (dice_scores) {
        j["metrics"]["dice_mean"] = dice_scores->mean;
        for (const auto& [k, v] : dice_scores->per_class) {
            if (v)
                j["metrics"]["dice_per_class"][std::to_string(k)] = *v;
            else
                j["metrics"]["dice_per_class"][std::to_string(k)] = nullptr;
        }
    }
    if (tre_result) {
        j["metrics"]["tre_mean_mm"] = tre_result->mean;
        j["metrics"]["tre_max_mm"] = tre_result->max;
        j["metrics"]["tre_excluded"] = tre_result->excluded.size();
    }
    j["timing"] = {{"wall_seconds", result.wall_seconds}};
    return j;
}

}  // namespace svreg
