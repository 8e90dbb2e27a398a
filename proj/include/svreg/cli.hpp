#pragma once

// Command implementations behind the svreg tool. Configs are single JSON
// documents, schema-validated with unknown keys rejected; command-line flags
// override top-level keys only. Every artifact records the config hash.
// Exit codes: 1 malformed config, 2 I/O failure, 3 numerical abort.

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "svreg/eval.hpp"
#include "svreg/hyperopt.hpp"
#include "svreg/npy.hpp"
#include "svreg/optimize.hpp"
#include "svreg/synth.hpp"

namespace svreg::cli {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;

inline std::string config_hash_hex(const json& cfg) {
    const std::uint64_t h = fnv1a64(cfg.dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& where) {
    if (!j.is_object()) throw input_error(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw input_error(where + ": unknown key '" + it.key() + "'");
}

inline std::string require_string(const json& j, const std::string& key,
                                  const std::string& where) {
    if (!j.contains(key)) throw input_error(where + ": missing required key '" + key + "'");
    if (!j.at(key).is_string()) throw input_error(where + ": '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

inline std::filesystem::path existing_input(const std::string& path) {
    if (!std::filesystem::exists(path)) throw io_error("input not found: " + path);
    return path;
}

inline PriorKind parse_prior(const json& j, const std::string& where) {
    const std::string kind = j.is_object() && j.contains("kind") && j.at("kind").is_string()
                                 ? j.at("kind").get<std::string>()
                                 : "";
    if (kind == "beta") {
        reject_unknown_keys(j, {"kind", "alpha_prime", "lambda_max"}, where);
        BetaPrior b;
        b.alpha_prime = j.value("alpha_prime", b.alpha_prime);
        b.lambda_max = j.value("lambda_max", b.lambda_max);
        return b;
    }
    if (kind == "gaussian") {
        reject_unknown_keys(j, {"kind", "sigma_prime", "lambda_mean"}, where);
        GaussianPrior g;
        g.sigma_prime = j.value("sigma_prime", g.sigma_prime);
        g.lambda_mean = j.value("lambda_mean", g.lambda_mean);
        return g;
    }
    throw input_error(where + ": prior kind must be 'beta' or 'gaussian'");
}

/// Registration settings shared by cmd_register and cmd_tune.
inline RegistrationConfig parse_registration(const json& j, const std::string& where) {
    RegistrationConfig cfg;
    if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
    if (j.contains("learning_rate")) cfg.adam.lr = j.at("learning_rate").get<double>();
    if (j.contains("n_squaring")) cfg.n_squaring = j.at("n_squaring").get<int>();
    if (j.contains("lambda_resolution_factor"))
        cfg.lambda_resolution_factor = j.at("lambda_resolution_factor").get<double>();
    if (j.contains("dice_weight")) cfg.dice_weight = j.at("dice_weight").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("uniform_lambda")) cfg.uniform_lambda = j.at("uniform_lambda").get<double>();
    if (j.contains("ncc")) {
        const auto& n = j.at("ncc");
        reject_unknown_keys(n, {"window", "epsilon", "sigma_i"}, where + ".ncc");
        cfg.ncc.window = n.value("window", cfg.ncc.window);
        cfg.ncc.epsilon = n.value("epsilon", cfg.ncc.epsilon);
        cfg.ncc.sigma_i = n.value("sigma_i", cfg.ncc.sigma_i);
    }
    if (j.contains("prior")) cfg.prior = parse_prior(j.at("prior"), where + ".prior");
    cfg.validate();
    return cfg;
}

inline int parse_threads(const json& j) {
    int threads = 1;
    if (j.contains("threads")) threads = j.at("threads").get<int>();
    if (threads < 1) throw input_error("threads must be >= 1");
    return threads;
}

/// One-hot stack over the sorted label values of both maps.
inline LabelStack one_hot(const IntField& labels, const std::vector<int>& classes) {
    LabelStack st(labels.grid, static_cast<int>(classes.size()));
    for (std::size_t k = 0; k < classes.size(); ++k) {
        double* ch = st.channel(static_cast<int>(k));
        for (std::size_t i = 0; i < labels.values.size(); ++i)
            ch[i] = labels.values[i] == classes[k] ? 1.0 : 0.0;
    }
    return st;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    atomic_write_bytes(path, j.dump(2) + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// register
// ---------------------------------------------------------------------------

inline int cmd_register(const json& cfg) {
    detail::reject_unknown_keys(
        cfg,
        {"moving", "fixed", "moving_labels", "fixed_labels", "out_dir", "seed", "threads",
         "iterations", "learning_rate", "n_squaring", "lambda_resolution_factor", "dice_weight",
         "ncc", "prior", "uniform_lambda"},
        "register");
    const auto moving_path = detail::existing_input(detail::require_string(cfg, "moving", "register"));
    const auto fixed_path = detail::existing_input(detail::require_string(cfg, "fixed", "register"));
    const std::filesystem::path out_dir = detail::require_string(cfg, "out_dir", "register");
    detail::parse_threads(cfg);
    auto reg_cfg = detail::parse_registration(cfg, "register");

    const auto moving = load_scalar_field(moving_path);
    const auto fixed = load_scalar_field(fixed_path);

    std::optional<IntField> moving_labels, fixed_labels;
    std::optional<LabelStack> moving_stack, fixed_stack;
    if (cfg.contains("moving_labels") || cfg.contains("fixed_labels")) {
        moving_labels =
            load_int_field(detail::existing_input(detail::require_string(cfg, "moving_labels", "register")));
        fixed_labels =
            load_int_field(detail::existing_input(detail::require_string(cfg, "fixed_labels", "register")));
        if (reg_cfg.dice_weight > 0.0) {
            auto classes = label_classes(*moving_labels, *fixed_labels);
            moving_stack = detail::one_hot(*moving_labels, classes);
            fixed_stack = detail::one_hot(*fixed_labels, classes);
        }
    }

    auto result = register_pair(moving, fixed, reg_cfg, moving_stack, fixed_stack);

    const std::string hash = config_hash_hex(cfg);
    const json extra = {{"config_hash", hash}};
    save_vector_field(out_dir / "displacement.npy", result.displacement, extra);
    save_vector_field(out_dir / "inverse_displacement.npy", result.inverse_displacement, extra);
    save_scalar_field(out_dir / "lambda.npy", result.lambda, extra);

    std::optional<DiceScores> dice_scores;
    if (moving_labels) {
        auto warped = warp_nearest(*moving_labels, result.displacement);
        dice_scores = dice(warped, *fixed_labels, label_classes(warped, *fixed_labels));
    }
    json report = make_report(result, reg_cfg, dice_scores);
    report["config_hash"] = hash;
    detail::write_json(out_dir / "report.json", report);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

namespace detail {

inline json manifest_entry(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string("fnv1a:") + buf;
}

/// Landmarks on a margin-inset lattice; moving landmarks are the fixed ones
/// mapped through the truth displacement.
inline std::pair<LandmarkSet, LandmarkSet> truth_landmarks(const VectorField& true_disp) {
    const Grid& g = true_disp.grid;
    LandmarkSet fixed_lms, moving_lms;
    fixed_lms.ndim = moving_lms.ndim = g.ndim;
    const int margin = 16, step = 16;
    for (int x = margin; x < g.dims[0] - margin; x += step)
        for (int y = margin; y < g.dims[1] - margin; y += step) {
            const std::size_t i = g.index({x, y, 0});
            fixed_lms.points_mm.push_back({x * g.spacing[0], y * g.spacing[1], 0.0});
            moving_lms.points_mm.push_back({(x + true_disp.at(0, i)) * g.spacing[0],
                                            (y + true_disp.at(1, i)) * g.spacing[1], 0.0});
        }
    return {moving_lms, fixed_lms};
}

}  // namespace detail

inline const std::vector<std::string>& synth_scenario_names() {
    static const std::vector<std::string> names = {"slide-v6", "slide-h4", "slide-d5",
                                                   "shapes-128", "shift-64"};
    return names;
}

inline int cmd_synth(const json& cfg) {
    detail::reject_unknown_keys(cfg, {"scenario", "out_dir", "seed", "threads"}, "synth");
    const std::string name = detail::require_string(cfg, "scenario", "synth");
    const std::filesystem::path out_dir = detail::require_string(cfg, "out_dir", "synth");
    const std::uint64_t seed = cfg.value("seed", 1ULL);
    detail::parse_threads(cfg);

    const auto& names = synth_scenario_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string valid;
        for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
        throw input_error("synth: unknown scenario '" + name + "' (valid: " + valid + ")");
    }

    json manifest;
    manifest["scenario"] = name;
    const std::string hash = config_hash_hex(cfg);
    manifest["config_hash"] = hash;
    const json extra = {{"config_hash", hash}};
    auto add = [&](const std::filesystem::path& p) {
        manifest["files"][p.filename().string()] = detail::manifest_entry(p);
    };

    if (name.rfind("slide-", 0) == 0) {
        // golden scenarios regenerate from their frozen seeds
        const auto scenarios = golden_scenarios();
        const auto& sc = find_scenario(scenarios, name);
        manifest["seed"] = sc.texture_seed;
        auto pair = sliding_pair_2d(sc);
        save_scalar_field(out_dir / "moving.npy", pair.moving, extra);
        save_scalar_field(out_dir / "fixed.npy", pair.fixed, extra);
        save_vector_field(out_dir / "true_displacement.npy", pair.true_disp, extra);
        save_int_field(out_dir / "discontinuity_mask.npy", pair.discontinuity_mask, extra);
        save_int_field(out_dir / "labels.npy", pair.labels, extra);
        // content labels of the fixed image (the truth-warped label map)
        save_int_field(out_dir / "labels_fixed.npy", warp_nearest(pair.labels, pair.true_disp),
                       extra);
        auto [mlms, flms] = detail::truth_landmarks(pair.true_disp);
        save_landmarks(out_dir / "landmarks_moving.csv", mlms);
        save_landmarks(out_dir / "landmarks_fixed.csv", flms);
        json geom = {{"name", sc.name},
                     {"offset", sc.offset},
                     {"band_width", sc.band_width},
                     {"texture_seed", sc.texture_seed}};
        detail::write_json(out_dir / "scenario.json", geom);
        for (const char* f : {"moving.npy", "fixed.npy", "true_displacement.npy",
                              "discontinuity_mask.npy", "labels.npy", "labels_fixed.npy",
                              "landmarks_moving.csv", "landmarks_fixed.csv", "scenario.json"})
            add(out_dir / f);
    } else if (name == "shapes-128") {
        manifest["seed"] = seed;
        auto shapes = random_shapes_image(Grid({128, 128}), 6, seed);
        save_scalar_field(out_dir / "image.npy", shapes.image, extra);
        save_int_field(out_dir / "labels.npy", shapes.labels, extra);
        for (const char* f : {"image.npy", "labels.npy"}) add(out_dir / f);
    } else {  // shift-64
        manifest["seed"] = seed;
        Grid g({64, 64});
        auto moving = textured_image(g, seed);
        VectorField shift(g, 0.0);
        for (std::size_t i = 0; i < g.voxel_count(); ++i) shift.at(0, i) = 3.0;
        auto fixed = warp(moving, shift);
        save_scalar_field(out_dir / "moving.npy", moving, extra);
        save_scalar_field(out_dir / "fixed.npy", fixed, extra);
        save_vector_field(out_dir / "true_displacement.npy", shift, extra);
        auto [mlms, flms] = detail::truth_landmarks(shift);
        save_landmarks(out_dir / "landmarks_moving.csv", mlms);
        save_landmarks(out_dir / "landmarks_fixed.csv", flms);
        for (const char* f : {"moving.npy", "fixed.npy", "true_displacement.npy",
                              "landmarks_moving.csv", "landmarks_fixed.csv"})
            add(out_dir / f);
    }
    detail::write_json(out_dir / "manifest.json", manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

namespace detail {

struct TuneCase {
    ScalarField moving, fixed;
    std::optional<IntField> moving_labels, fixed_labels;
    std::optional<LandmarkSet> moving_lms, fixed_lms;
};

inline TuneCase load_tune_case(const std::filesystem::path& dir, const std::string& objective) {
    TuneCase c;
    c.moving = load_scalar_field(existing_input((dir / "moving.npy").string()));
    c.fixed = load_scalar_field(existing_input((dir / "fixed.npy").string()));
    if (objective == "dice") {
        c.moving_labels = load_int_field(existing_input((dir / "labels.npy").string()));
        c.fixed_labels = load_int_field(existing_input((dir / "labels_fixed.npy").string()));
    } else {
        c.moving_lms = load_landmarks(existing_input((dir / "landmarks_moving.csv").string()));
        c.fixed_lms = load_landmarks(existing_input((dir / "landmarks_fixed.csv").string()));
    }
    return c;
}

}  // namespace detail

inline int cmd_tune(const json& cfg) {
    detail::reject_unknown_keys(cfg,
                                {"objective", "scenarios", "n_trials", "space", "prior_kind",
                                 "register", "study_path", "best_params_path", "sampler",
                                 "pruner", "seed", "threads", "out_dir"},
                                "tune");
    const std::string objective_kind = detail::require_string(cfg, "objective", "tune");
    if (objective_kind != "dice" && objective_kind != "tre")
        throw input_error("tune: objective must be 'dice' or 'tre'");
    const std::string prior_kind = detail::require_string(cfg, "prior_kind", "tune");
    if (prior_kind != "beta" && prior_kind != "gaussian")
        throw input_error("tune: prior_kind must be 'beta' or 'gaussian'");
    if (!cfg.contains("scenarios") || !cfg.at("scenarios").is_array() ||
        cfg.at("scenarios").empty())
        throw input_error("tune: 'scenarios' must be a non-empty array of bundle dirs");
    const int n_trials = cfg.value("n_trials", 50);
    const std::filesystem::path study_path = detail::require_string(cfg, "study_path", "tune");
    const std::filesystem::path best_path =
        detail::require_string(cfg, "best_params_path", "tune");
    detail::parse_threads(cfg);

    SearchSpace space;
    if (!cfg.contains("space")) throw input_error("tune: missing 'space'");
    for (auto it = cfg.at("space").begin(); it != cfg.at("space").end(); ++it) {
        detail::reject_unknown_keys(it.value(), {"low", "high", "log"}, "tune.space." + it.key());
        ParamSpec p;
        p.name = it.key();
        p.low = it.value().at("low").get<double>();
        p.high = it.value().at("high").get<double>();
        p.log_scale = it.value().value("log", false);
        space.params.push_back(std::move(p));
    }
    const std::set<std::string> beta_names{"alpha_prime", "lambda_max"};
    const std::set<std::string> gauss_names{"sigma_prime", "lambda_mean"};
    for (const auto& p : space.params) {
        const auto& allowed = prior_kind == "beta" ? beta_names : gauss_names;
        if (!allowed.count(p.name))
            throw input_error("tune: parameter '" + p.name + "' does not belong to the " +
                              prior_kind + " prior");
    }

    RegistrationConfig base_cfg =
        cfg.contains("register") ? detail::parse_registration(cfg.at("register"), "tune.register")
                                 : RegistrationConfig{};

    std::vector<detail::TuneCase> cases;
    for (const auto& s : cfg.at("scenarios"))
        cases.push_back(detail::load_tune_case(s.get<std::string>(), objective_kind));

    TpeStudy study;
    study.direction = objective_kind == "dice" ? TpeStudy::Direction::maximize
                                               : TpeStudy::Direction::minimize;
    study.seed = cfg.value("seed", 0ULL);
    if (cfg.contains("sampler")) {
        const auto& s = cfg.at("sampler");
        detail::reject_unknown_keys(s, {"n_startup", "gamma", "n_ei_candidates"}, "tune.sampler");
        study.sampler.n_startup = s.value("n_startup", study.sampler.n_startup);
        study.sampler.gamma = s.value("gamma", study.sampler.gamma);
        study.sampler.n_ei_candidates = s.value("n_ei_candidates", study.sampler.n_ei_candidates);
    }
    if (cfg.contains("pruner")) {
        const auto& p = cfg.at("pruner");
        detail::reject_unknown_keys(p, {"n_startup_trials", "n_warmup_steps", "interval_steps"},
                                    "tune.pruner");
        study.pruner.n_startup_trials = p.value("n_startup_trials", study.pruner.n_startup_trials);
        study.pruner.n_warmup_steps = p.value("n_warmup_steps", study.pruner.n_warmup_steps);
        study.pruner.interval_steps = p.value("interval_steps", study.pruner.interval_steps);
    }
    if (std::filesystem::exists(study_path)) {
        auto loaded = study_from_json(nlohmann::json::parse(read_bytes(study_path)));
        if (loaded.seed != study.seed || loaded.direction != study.direction)
            throw input_error("tune: existing study is inconsistent with this config");
        study = std::move(loaded);
    }

    auto make_prior = [&](const std::map<std::string, double>& params) -> PriorKind {
        if (prior_kind == "beta") {
            BetaPrior b;
            if (params.count("alpha_prime")) b.alpha_prime = params.at("alpha_prime");
            if (params.count("lambda_max")) b.lambda_max = params.at("lambda_max");
            return b;
        }
        GaussianPrior g;
        if (params.count("sigma_prime")) g.sigma_prime = params.at("sigma_prime");
        if (params.count("lambda_mean")) g.lambda_mean = params.at("lambda_mean");
        return g;
    };

    // Mean validation metric over the scenario list; registrations advance in
    // lockstep so intermediate values cover all cases at the pruner interval.
    auto objective = [&](const std::map<std::string, double>& params, TrialHandle& handle) {
        RegistrationConfig rc = base_cfg;
        rc.prior = make_prior(params);
        std::vector<InstanceRegistration> regs;
        regs.reserve(cases.size());
        for (const auto& c : cases) regs.emplace_back(c.moving, c.fixed, rc);

        auto metric = [&]() {
            double acc = 0.0;
            for (std::size_t i = 0; i < cases.size(); ++i) {
                const auto disp = regs[i].displacement();
                if (objective_kind == "dice") {
                    auto warped = warp_nearest(*cases[i].moving_labels, disp);
                    acc += dice(warped, *cases[i].fixed_labels,
                                label_classes(warped, *cases[i].fixed_labels))
                               .mean;
                } else {
                    acc += tre(*cases[i].moving_lms, *cases[i].fixed_lms, disp).mean;
                }
            }
            return acc / static_cast<double>(cases.size());
        };

        const int interval = std::max(1, study.pruner.interval_steps);
        for (int it = 1; it <= rc.iterations; ++it) {
            for (auto& r : regs) r.step();
            if (it % interval == 0 && it < rc.iterations) {
                handle.report(it, metric());
                if (handle.should_prune(it)) throw TrialPruned{};
            }
        }
        return metric();
    };

    auto save = [&](const TpeStudy& s) {
        atomic_write_bytes(study_path, study_to_json(s).dump(2) + "\n");
    };
    auto best = run_study(objective, space, n_trials, study, save);

    json best_json;
    best_json["prior"] = prior_to_json(make_prior(best.params));
    best_json["objective"] = objective_kind;
    best_json["value"] = *best.final_value;
    best_json["trial_id"] = best.id;
    best_json["config_hash"] = config_hash_hex(cfg);
    detail::write_json(best_path, best_json);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline int cmd_eval(const json& cfg) {
    detail::reject_unknown_keys(cfg,
                                {"displacement", "moving_labels", "fixed_labels",
                                 "moving_landmarks", "fixed_landmarks", "truth_displacement",
                                 "mask", "out", "threads", "seed"},
                                "eval");
    const auto disp =
        load_vector_field(detail::existing_input(detail::require_string(cfg, "displacement", "eval")));
    const std::filesystem::path out = detail::require_string(cfg, "out", "eval");
    detail::parse_threads(cfg);

    json metrics;
    auto rep = fold_metrics(disp);
    metrics["pct_nonpos_jacobian"] = rep.pct_nonpos_j;
    metrics["pct_ndv"] = rep.pct_ndv;
    metrics["min_jacobian"] = rep.min_j;

    if (cfg.contains("moving_labels")) {
        auto moving_labels =
            load_int_field(detail::existing_input(detail::require_string(cfg, "moving_labels", "eval")));
        auto fixed_labels =
            load_int_field(detail::existing_input(detail::require_string(cfg, "fixed_labels", "eval")));
        require_same_grid(moving_labels.grid, disp.grid, "eval labels");
        require_same_grid(fixed_labels.grid, disp.grid, "eval labels");
        auto warped = warp_nearest(moving_labels, disp);
        auto d = dice(warped, fixed_labels, label_classes(warped, fixed_labels));
        metrics["dice_mean"] = d.mean;
        for (const auto& [k, v] : d.per_class)
            metrics["dice_per_class"][std::to_string(k)] = v ? json(*v) : json(nullptr);
    }
    if (cfg.contains("moving_landmarks")) {
        auto mlms =
            load_landmarks(detail::existing_input(detail::require_string(cfg, "moving_landmarks", "eval")));
        auto flms =
            load_landmarks(detail::existing_input(detail::require_string(cfg, "fixed_landmarks", "eval")));
        auto t = tre(mlms, flms, disp);
        metrics["tre_mean_mm"] = t.mean;
        metrics["tre_max_mm"] = t.max;
        metrics["tre_excluded"] = t.excluded.size();
    }
    if (cfg.contains("truth_displacement")) {
        auto truth = load_vector_field(
            detail::existing_input(detail::require_string(cfg, "truth_displacement", "eval")));
        require_same_grid(truth.grid, disp.grid, "eval truth");
        std::optional<IntField> mask;
        if (cfg.contains("mask")) {
            mask = load_int_field(detail::existing_input(detail::require_string(cfg, "mask", "eval")));
            require_same_grid(mask->grid, disp.grid, "eval mask");
        }
        std::vector<double> epe;
        for (std::size_t i = 0; i < disp.grid.voxel_count(); ++i) {
            if (mask && mask->values[i] == 0) continue;
            double d2 = 0.0;
            for (int a = 0; a < disp.grid.ndim; ++a) {
                const double diff = disp.at(a, i) - truth.at(a, i);
                d2 += diff * diff;
            }
            epe.push_back(std::sqrt(d2));
        }
        if (!epe.empty()) {
            std::sort(epe.begin(), epe.end());
            double mean = 0.0;
            for (double v : epe) mean += v;
            metrics["epe_mean"] = mean / static_cast<double>(epe.size());
            metrics["epe_median"] = epe.size() % 2 == 1
                                        ? epe[epe.size() / 2]
                                        : 0.5 * (epe[epe.size() / 2 - 1] + epe[epe.size() / 2]);
            metrics["epe_max"] = epe.back();
        }
    }

    json out_json;
    out_json["config_hash"] = config_hash_hex(cfg);
    out_json["metrics"] = metrics;
    detail::write_json(out, out_json);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// warp
// ---------------------------------------------------------------------------

inline int cmd_warp(const json& cfg) {
    detail::reject_unknown_keys(cfg, {"input", "displacement", "output", "interp", "threads", "seed"},
                                "warp");
    const auto input_path = detail::existing_input(detail::require_string(cfg, "input", "warp"));
    const auto disp =
        load_vector_field(detail::existing_input(detail::require_string(cfg, "displacement", "warp")));
    const std::filesystem::path output = detail::require_string(cfg, "output", "warp");
    detail::parse_threads(cfg);

    std::string interp = cfg.value("interp", "auto");
    if (interp != "auto" && interp != "linear" && interp != "nearest")
        throw input_error("warp: interp must be 'auto', 'linear' or 'nearest'");
    if (interp == "auto") {
        const auto bytes = read_bytes(input_path);
        const auto h = npy::parse_header(bytes, input_path.string());
        interp = h.descr == "<i4" ? "nearest" : "linear";
    }

    const json extra = {{"config_hash", config_hash_hex(cfg)}};
    if (interp == "nearest") {
        auto labels = load_int_field(input_path);
        require_same_grid(labels.grid, disp.grid, "warp");
        save_int_field(output, warp_nearest(labels, disp), extra);
    } else {
        auto image = load_scalar_field(input_path);
        require_same_grid(image.grid, disp.grid, "warp");
        save_scalar_field(output, warp(image, disp), extra);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int dispatch(const std::string& command, const json& cfg) {
    if (command == "register") return cmd_register(cfg);
    if (command == "synth") return cmd_synth(cfg);
    if (command == "tune") return cmd_tune(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "warp") return cmd_warp(cfg);
    throw input_error("unknown command: " + command);
}

}  // namespace svreg::cli
