// svreg: deformable registration with spatially varying regularization.
// Commands: register, synth, tune, eval, warp. Configuration is a single
// JSON document; --seed/--out-dir/--threads override top-level keys.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "svreg/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
    sub->add_option("--config", flags.config_path, "JSON config file")->required();
    sub->add_option("--seed", flags.seed, "overrides the top-level 'seed' key");
    sub->add_option("--out-dir", flags.out_dir, "overrides the top-level 'out_dir' key");
    sub->add_option("--threads", flags.threads,
                    "overrides the top-level 'threads' key (SVREG_THREADS as fallback)");
}

nlohmann::json load_config(const CommonFlags& flags) {
    if (!std::filesystem::exists(flags.config_path))
        throw svreg::io_error("config not found: " + flags.config_path);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(svreg::read_bytes(flags.config_path));
    } catch (const nlohmann::json::exception& e) {
        throw svreg::input_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw svreg::input_error("config must be a JSON object");
    if (flags.seed) cfg["seed"] = *flags.seed;
    if (flags.out_dir) cfg["out_dir"] = *flags.out_dir;
    if (flags.threads) {
        cfg["threads"] = *flags.threads;
    } else if (!cfg.contains("threads")) {
        if (const char* env = std::getenv("SVREG_THREADS")) cfg["threads"] = std::atoi(env);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"svreg: diffeomorphic registration with spatially varying regularization"};
    app.require_subcommand(1);

    const std::vector<std::string> commands = {"register", "synth", "tune", "eval", "warp"};
    std::map<std::string, CommonFlags> flags;
    for (const auto& name : commands) {
        auto* sub = app.add_subcommand(name);
        add_common(sub, flags[name]);
    }

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return svreg::cli::dispatch(command, load_config(flags[command]));
    } catch (const svreg::input_error& e) {
        std::cerr << "error (config): " << e.what() << "\n";
        return svreg::cli::kExitConfig;
    } catch (const svreg::io_error& e) {
        std::cerr << "error (io): " << e.what() << "\n";
        return svreg::cli::kExitIo;
    } catch (const svreg::numerical_error& e) {
        std::cerr << "error (numerical): " << e.what() << "\n";
        return svreg::cli::kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return svreg::cli::kExitConfig;
    }
}
