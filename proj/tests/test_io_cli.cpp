#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "svreg/cli.hpp"

using namespace svreg;
namespace fs = std::filesystem;

namespace {

fs::path test_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / "svreg_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SVREG_CLI_PATH) + " " + args + " >" +
                            (test_root() / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::string slurp(const fs::path& p) { return read_bytes(p); }

}  // namespace

TEST_CASE("npy round trip for all field kinds") {
    Rng rng(1);
    const auto dir = test_root() / "npy";

    ScalarField s = oracle::random_field(Grid({5, 7, 3}, {1.0, 1.5, 2.0}), rng);
    save_scalar_field(dir / "s.npy", s);
    auto s2 = load_scalar_field(dir / "s.npy");
    CHECK(s2.grid == s.grid);
    CHECK(s2.values == s.values);

    VectorField v = oracle::random_vfield(Grid({6, 4}), rng, 2.0);
    save_vector_field(dir / "v.npy", v);
    auto v2 = load_vector_field(dir / "v.npy");
    CHECK(v2.grid == v.grid);
    CHECK(v2.data == v.data);

    IntField l(Grid({4, 5}));
    for (auto& x : l.values) x = static_cast<std::int32_t>(rng.below(7));
    save_int_field(dir / "l.npy", l);
    auto l2 = load_int_field(dir / "l.npy");
    CHECK(l2.values == l.values);
}

TEST_CASE("npy headers follow the v1.0 format") {
    const auto dir = test_root() / "npyhdr";
    ScalarField s(Grid({3, 4}), 0.5);
    save_scalar_field(dir / "s.npy", s);
    const auto bytes = slurp(dir / "s.npy");
    CHECK(bytes.compare(0, 6, "\x93NUMPY") == 0);
    CHECK(bytes[6] == '\x01');
    CHECK(bytes[7] == '\x00');
    // total header is a multiple of 64, then the raw little-endian payload
    const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                             (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    CHECK((10 + hlen) % 64 == 0);
    CHECK(bytes.size() == 10 + hlen + 12 * sizeof(double));
    CHECK(bytes.find("'descr': '<f8'") != std::string::npos);
    CHECK(bytes.find("'fortran_order': False") != std::string::npos);
    CHECK(bytes.find("(3, 4)") != std::string::npos);

    // sidecar carries grid metadata
    auto meta = nlohmann::json::parse(slurp(dir / "s.json"));
    CHECK(meta["kind"] == "scalar");
    CHECK(meta["axes"] == "xy");
    CHECK(meta["spacing"][0] == 1.0);

    // corrupted magic is rejected
    write_file(dir / "bad.npy", "NOTNUMPY....");
    CHECK_THROWS_AS(load_scalar_field(dir / "bad.npy"), io_error);
}

TEST_CASE("landmark csv round trip and validation") {
    const auto dir = test_root() / "lms";
    LandmarkSet lms;
    lms.ndim = 2;
    lms.points_mm = {{1.25, -3.5, 0.0}, {0.0, 100.125, 0.0}};
    save_landmarks(dir / "a.csv", lms);
    auto lms2 = load_landmarks(dir / "a.csv");
    CHECK(lms2.ndim == 2);
    CHECK(lms2.points_mm == lms.points_mm);
    CHECK(slurp(dir / "a.csv").rfind("x,y\n", 0) == 0);

    write_file(dir / "bad.csv", "u,v\n1,2\n");
    CHECK_THROWS_AS(load_landmarks(dir / "bad.csv"), io_error);
    write_file(dir / "short.csv", "x,y\n1\n");
    CHECK_THROWS_AS(load_landmarks(dir / "short.csv"), io_error);
}

TEST_CASE("atomic writes leave no temp files behind") {
    const auto dir = test_root() / "atomic";
    atomic_write_bytes(dir / "f.txt", "hello");
    CHECK(slurp(dir / "f.txt") == "hello");
    for (const auto& e : fs::directory_iterator(dir))
        CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("cli: malformed configs exit 1") {
    const auto dir = test_root() / "badcfg";
    fs::create_directories(dir);

    write_file(dir / "notjson.json", "{nope");
    CHECK(run_cli("register --config " + (dir / "notjson.json").string()) == 1);

    write_file(dir / "unknown.json", R"({"scenario":"shift-64","out_dir":"x","bogus":1})");
    CHECK(run_cli("synth --config " + (dir / "unknown.json").string()) == 1);

    write_file(dir / "badname.json", R"({"scenario":"nope","out_dir":"x"})");
    CHECK(run_cli("synth --config " + (dir / "badname.json").string()) == 1);
    // the error message lists the valid scenario names
    CHECK(slurp(test_root() / "cli.log").find("slide-v6") != std::string::npos);

    CHECK(run_cli("frobnicate --config x.json") != 0);
}

TEST_CASE("cli: missing inputs exit 2 with the path in the message") {
    const auto dir = test_root() / "missing";
    fs::create_directories(dir);
    write_file(dir / "reg.json",
               R"({"moving":"/nonexistent/m.npy","fixed":"/nonexistent/f.npy","out_dir":"o"})");
    CHECK(run_cli("register --config " + (dir / "reg.json").string()) == 2);
    CHECK(slurp(test_root() / "cli.log").find("/nonexistent/m.npy") != std::string::npos);

    CHECK(run_cli("register --config " + (dir / "does_not_exist.json").string()) == 2);
}

TEST_CASE("numerical aborts carry the offending term") {
    Grid g({8, 8});
    ScalarField nan_img(g, 0.5);
    nan_img.values[10] = std::numeric_limits<double>::quiet_NaN();
    ScalarField img(g, 0.5);
    VectorField v(g, 0.0);
    auto wp = make_weight_params(g, BetaPrior{0.1, 1.0}, 0.5);
    RegistrationConfig cfg;
    CHECK_THROWS_WITH(total_loss(img, nan_img, v, wp, cfg),
                      Catch::Matchers::ContainsSubstring("ncc"));
}

TEST_CASE("cli synth: golden bundle regenerates byte-identically") {
    const auto dir = test_root() / "golden";
    fs::create_directories(dir);
    write_file(dir / "synth.json",
               R"({"scenario":"slide-v6","out_dir":")" + (dir / "a").string() + R"("})");
    REQUIRE(run_cli("synth --config " + (dir / "synth.json").string()) == 0);
    write_file(dir / "synth2.json",
               R"({"scenario":"slide-v6","out_dir":")" + (dir / "b").string() + R"("})");
    REQUIRE(run_cli("synth --config " + (dir / "synth2.json").string()) == 0);

    auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest["files"].size() == 9);
    for (const auto& [fname, hash] : manifest["files"].items()) {
        const auto pa = dir / "a" / fname;
        const auto pb = dir / "b" / fname;
        CHECK(slurp(pa) == slurp(pb));
        // manifest hash matches the file content
        const auto bytes = slurp(pa);
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
        CHECK(hash.get<std::string>() == std::string("fnv1a:") + buf);
    }
}

TEST_CASE("cli register: an image with itself stays fold-free") {
    const auto dir = test_root() / "regself";
    fs::create_directories(dir);
    auto img = textured_image(Grid({24, 24}), 5);
    save_scalar_field(dir / "img.npy", img);
    nlohmann::json cfg = {{"moving", (dir / "img.npy").string()},
                          {"fixed", (dir / "img.npy").string()},
                          {"out_dir", (dir / "out").string()},
                          {"iterations", 40},
                          {"prior", {{"kind", "beta"}, {"alpha_prime", 0.02}, {"lambda_max", 1.0}}}};
    write_file(dir / "reg.json", cfg.dump());
    REQUIRE(run_cli("register --config " + (dir / "reg.json").string()) == 0);
    auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
    CHECK_FALSE(report["metrics"].contains("dice_mean"));
    CHECK(report["metrics"]["pct_nonpos_jacobian"] == 0.0);
    CHECK(report["metrics"]["pct_ndv"] == 0.0);
}

TEST_CASE("cli register: deterministic outputs and report schema") {
    const auto dir = test_root() / "regdet";
    fs::create_directories(dir);
    write_file(dir / "synth.json",
               R"({"scenario":"shift-64","out_dir":")" + (dir / "bundle").string() + R"("})");
    REQUIRE(run_cli("synth --config " + (dir / "synth.json").string()) == 0);

    const std::string reg_cfg = R"({
      "moving": ")" + (dir / "bundle" / "moving.npy").string() + R"(",
      "fixed": ")" + (dir / "bundle" / "fixed.npy").string() + R"(",
      "out_dir": ")" + (dir / "OUT").string() + R"(",
      "iterations": 20, "learning_rate": 0.02, "seed": 7,
      "prior": {"kind": "beta", "alpha_prime": 0.05, "lambda_max": 1.0}
    })";
    write_file(dir / "reg.json", reg_cfg);
    REQUIRE(run_cli("register --config " + (dir / "reg.json").string() + " --out-dir " +
                    (dir / "r1").string()) == 0);
    REQUIRE(run_cli("register --config " + (dir / "reg.json").string() + " --out-dir " +
                    (dir / "r2").string()) == 0);
    CHECK(slurp(dir / "r1" / "displacement.npy") == slurp(dir / "r2" / "displacement.npy"));
    CHECK(slurp(dir / "r1" / "lambda.npy") == slurp(dir / "r2" / "lambda.npy"));
    CHECK(slurp(dir / "r1" / "inverse_displacement.npy") ==
          slurp(dir / "r2" / "inverse_displacement.npy"));

    auto report = nlohmann::json::parse(slurp(dir / "r1" / "report.json"));
    CHECK(report.contains("config_hash"));
    CHECK(report["loss"]["iterations"] == 20);
    CHECK_FALSE(report["metrics"].contains("dice_mean"));  // no labels given
    // flag override only touches the top-level key, hash reflects it
    auto r2rep = nlohmann::json::parse(slurp(dir / "r2" / "report.json"));
    CHECK(report["config_hash"] != r2rep["config_hash"]);
}

TEST_CASE("cli warp: zero field identity, labels stay integral, matches in-process") {
    const auto dir = test_root() / "warpcmd";
    fs::create_directories(dir);
    Rng rng(3);
    Grid g({12, 10});
    auto img = oracle::random_field(g, rng);
    save_scalar_field(dir / "img.npy", img);
    VectorField zero(g, 0.0);
    save_vector_field(dir / "zero.npy", zero);
    IntField labels(g);
    for (auto& v : labels.values) v = static_cast<std::int32_t>(rng.below(4));
    save_int_field(dir / "labels.npy", labels);
    auto disp = random_smooth_velocity(g, 1.5, 6.0, 4);
    save_vector_field(dir / "disp.npy", disp);

    write_file(dir / "w0.json", R"({"input":")" + (dir / "img.npy").string() +
                                    R"(","displacement":")" + (dir / "zero.npy").string() +
                                    R"(","output":")" + (dir / "out0.npy").string() + R"("})");
    REQUIRE(run_cli("warp --config " + (dir / "w0.json").string()) == 0);
    CHECK(load_scalar_field(dir / "out0.npy").values == img.values);

    write_file(dir / "wl.json", R"({"input":")" + (dir / "labels.npy").string() +
                                    R"(","displacement":")" + (dir / "disp.npy").string() +
                                    R"(","output":")" + (dir / "outl.npy").string() + R"("})");
    REQUIRE(run_cli("warp --config " + (dir / "wl.json").string()) == 0);
    auto warped_labels = load_int_field(dir / "outl.npy");
    CHECK(warped_labels.values == warp_nearest(labels, disp).values);
    CHECK(slurp(dir / "outl.npy").find("'<i4'") != std::string::npos);

    write_file(dir / "wi.json", R"({"input":")" + (dir / "img.npy").string() +
                                    R"(","displacement":")" + (dir / "disp.npy").string() +
                                    R"(","output":")" + (dir / "outi.npy").string() + R"("})");
    REQUIRE(run_cli("warp --config " + (dir / "wi.json").string()) == 0);
    auto warped_img = load_scalar_field(dir / "outi.npy");
    CHECK(warped_img.values == warp(img, disp).values);
}

TEST_CASE("cli eval: metrics equal in-process values, grid mismatch exits 1") {
    const auto dir = test_root() / "evalcmd";
    fs::create_directories(dir);
    Grid g({16, 16});
    auto disp = random_smooth_velocity(g, 1.0, 8.0, 9);
    save_vector_field(dir / "disp.npy", disp);
    IntField labels(g);
    Rng rng(5);
    for (auto& v : labels.values) v = 1 + static_cast<std::int32_t>(rng.below(3));
    save_int_field(dir / "la.npy", labels);
    auto warped = warp_nearest(labels, disp);
    save_int_field(dir / "lb.npy", warped);

    write_file(dir / "e.json", R"({"displacement":")" + (dir / "disp.npy").string() +
                                   R"(","moving_labels":")" + (dir / "la.npy").string() +
                                   R"(","fixed_labels":")" + (dir / "lb.npy").string() +
                                   R"(","out":")" + (dir / "m.json").string() + R"("})");
    REQUIRE(run_cli("eval --config " + (dir / "e.json").string()) == 0);
    auto metrics = nlohmann::json::parse(slurp(dir / "m.json"))["metrics"];

    auto want_rep = fold_metrics(disp);
    auto want_dice = dice(warped, warped, label_classes(warped, warped));
    CHECK(metrics["pct_nonpos_jacobian"].get<double>() == want_rep.pct_nonpos_j);
    CHECK(metrics["pct_ndv"].get<double>() == want_rep.pct_ndv);
    CHECK(metrics["dice_mean"].get<double>() == want_dice.mean);

    // identity case: dice 1
    CHECK(want_dice.mean == 1.0);

    // mismatched grids are refused
    IntField small(Grid({8, 8}), 1);
    save_int_field(dir / "small.npy", small);
    write_file(dir / "bad.json", R"({"displacement":")" + (dir / "disp.npy").string() +
                                     R"(","moving_labels":")" + (dir / "small.npy").string() +
                                     R"(","fixed_labels":")" + (dir / "lb.npy").string() +
                                     R"(","out":")" + (dir / "m2.json").string() + R"("})");
    CHECK(run_cli("eval --config " + (dir / "bad.json").string()) == 1);
}

TEST_CASE("cli tune: study persists, resumes, and best params load back") {
    const auto dir = test_root() / "tunecmd";
    fs::create_directories(dir);

    // a small sliding bundle written through the library
    SlideScenario sc;
    sc.name = "mini";
    sc.grid = Grid({48, 48});
    sc.boundary = SlideScenario::Boundary::vertical;
    sc.position = 24.0;
    sc.offset = 3.0;
    sc.texture_seed = 99;
    auto pair = sliding_pair_2d(sc);
    const auto bdir = dir / "bundle";
    save_scalar_field(bdir / "moving.npy", pair.moving);
    save_scalar_field(bdir / "fixed.npy", pair.fixed);
    save_int_field(bdir / "labels.npy", pair.labels);
    save_int_field(bdir / "labels_fixed.npy", warp_nearest(pair.labels, pair.true_disp));

    const std::string tune_cfg = R"({
      "objective": "dice", "prior_kind": "beta",
      "scenarios": [")" + bdir.string() + R"("],
      "n_trials": 4, "seed": 5,
      "space": {"alpha_prime": {"low": 0.0, "high": 0.2},
                "lambda_max": {"low": 0.2, "high": 2.0}},
      "register": {"iterations": 12, "learning_rate": 0.02},
      "pruner": {"n_startup_trials": 2, "n_warmup_steps": 4, "interval_steps": 4},
      "study_path": ")" + (dir / "study.json").string() + R"(",
      "best_params_path": ")" + (dir / "best.json").string() + R"("
    })";
    write_file(dir / "tune.json", tune_cfg);
    REQUIRE(run_cli("tune --config " + (dir / "tune.json").string()) == 0);

    auto study1 = study_from_json(nlohmann::json::parse(slurp(dir / "study.json")));
    CHECK(study1.trials.size() == 4);

    // resume continues at trial k+1 without rerunning earlier trials
    std::string resumed = tune_cfg;
    resumed.replace(resumed.find("\"n_trials\": 4"), 13, "\"n_trials\": 6");
    write_file(dir / "tune6.json", resumed);
    REQUIRE(run_cli("tune --config " + (dir / "tune6.json").string()) == 0);
    auto study2 = study_from_json(nlohmann::json::parse(slurp(dir / "study.json")));
    CHECK(study2.trials.size() == 6);
    for (int i = 0; i < 4; ++i) {
        CHECK(study2.trials[i].params == study1.trials[i].params);
        CHECK(study2.trials[i].final_value == study1.trials[i].final_value);
    }

    // best-params file feeds straight back into cmd_register
    auto best = nlohmann::json::parse(slurp(dir / "best.json"));
    CHECK(best["prior"]["kind"] == "beta");
    nlohmann::json reg_cfg = {{"moving", (bdir / "moving.npy").string()},
                              {"fixed", (bdir / "fixed.npy").string()},
                              {"out_dir", (dir / "reg").string()},
                              {"iterations", 5},
                              {"prior", best["prior"]}};
    write_file(dir / "reg.json", reg_cfg.dump());
    CHECK(run_cli("register --config " + (dir / "reg.json").string()) == 0);
    auto report = nlohmann::json::parse(slurp(dir / "reg" / "report.json"));
    CHECK(report["settings"]["prior"] == best["prior"]);
}
