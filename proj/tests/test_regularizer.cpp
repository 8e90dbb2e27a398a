#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "svreg/regularizer.hpp"

using namespace svreg;

namespace {

double quadratic_form(const std::vector<double>& lap, const VectorField& u) {
    const std::size_t n = u.grid.voxel_count();
    double acc = 0.0;
    for (int c = 0; c < u.grid.ndim; ++c) {
        const double* uc = u.component(c);
        auto lu = oracle::matvec(lap, std::vector<double>(uc, uc + n));
        for (std::size_t i = 0; i < n; ++i) acc += uc[i] * lu[i];
    }
    return acc;
}

}  // namespace

TEST_CASE("weighted diffusion of a constant field is zero") {
    Grid g({4, 4, 4});
    VectorField u(g, 1.7);
    Rng rng(2);
    auto lam = oracle::random_field(g, rng, 0.0, 2.0);
    auto r = weighted_diffusion(u, lam);
    CHECK(r.energy == 0.0);
    for (double v : r.grad_u.data) CHECK(v == 0.0);
}

TEST_CASE("uniform lambda on a unit ramp reduces to the classic diffusion value") {
    Grid g({4, 4, 4});
    VectorField u(g, 0.0);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) u.at(0, i) = g.coords(i)[0];
    ScalarField lam(g, 1.0);
    // 48 of 64 voxels have a forward-x neighbor; each contributes slope^2 = 1
    CHECK(weighted_diffusion(u, lam).energy == Catch::Approx(48.0 / 64.0).margin(1e-12));
}

TEST_CASE("weighted diffusion rejects negative lambda") {
    Grid g({4, 4});
    VectorField u(g, 0.0);
    ScalarField lam(g, -0.5);
    CHECK_THROWS_AS(weighted_diffusion(u, lam), input_error);
}

TEST_CASE("quadratic-form identity against the dense Laplacian") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Grid g({2 + (int)rng.below(4), 2 + (int)rng.below(4), 2 + (int)rng.below(4)});
        auto u = oracle::random_vfield(g, rng, 2.0);
        auto lam = oracle::random_field(g, rng, 0.0, 3.0);
        auto lap = build_laplacian_dense(lam);
        const double lhs = weighted_diffusion(u, lam).energy * g.voxel_count();
        const double rhs = quadratic_form(lap, u);
        CHECK(approx_rel(lhs, rhs, 1e-9));
    }
}

TEST_CASE("dense Laplacian of a 1D chain") {
    // Isolate a 3-node x-chain on the last y-slice: nodes (x, 1) have no
    // forward-y edges, and zero weights on the y = 0 row kill everything else.
    Grid g({3, 2});
    ScalarField lam(g, 0.0);
    const double a = 0.6, b = 1.3;
    lam.values[g.index({0, 1, 0})] = a;
    lam.values[g.index({1, 1, 0})] = b;
    auto m = build_laplacian_dense(lam);
    const std::size_t n = g.voxel_count();
    const auto idx = [&](int x) { return g.index({x, 1, 0}); };
    // hand expansion of sum lam(p) (u(p + e_x) - u(p))^2 over the chain:
    // [[a, -a, 0], [-a, a+b, -b], [0, -b, b]]
    CHECK(m[idx(0) * n + idx(0)] == Catch::Approx(a));
    CHECK(m[idx(0) * n + idx(1)] == Catch::Approx(-a));
    CHECK(m[idx(1) * n + idx(1)] == Catch::Approx(a + b));
    CHECK(m[idx(1) * n + idx(2)] == Catch::Approx(-b));
    CHECK(m[idx(2) * n + idx(1)] == Catch::Approx(-b));
    CHECK(m[idx(2) * n + idx(2)] == Catch::Approx(b));
    // rows involving the zero-weight slice vanish
    for (std::size_t j = 0; j < n; ++j) CHECK(m[g.index({0, 0, 0}) * n + j] == 0.0);
}

TEST_CASE("Laplacian axioms: symmetric, zero row sums, zero matrix for zero lambda") {
    Rng rng(5);
    Grid g({4, 3, 3});
    auto lam = oracle::random_field(g, rng, 0.0, 2.0);
    auto m = build_laplacian_dense(lam);
    const std::size_t n = g.voxel_count();
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += m[i * n + j];
            CHECK(m[i * n + j] == m[j * n + i]);
        }
        CHECK(std::abs(row) <= 1e-12);
    }
    ScalarField zero(g, 0.0);
    for (double v : build_laplacian_dense(zero)) CHECK(v == 0.0);
}

TEST_CASE("build_laplacian_dense rejects large grids") {
    ScalarField lam(Grid({11, 10, 10}));
    CHECK_THROWS_AS(build_laplacian_dense(lam), input_error);
}

TEST_CASE("diffusion energy homogeneity") {
    Rng rng(6);
    Grid g({4, 4, 3});
    auto u = oracle::random_vfield(g, rng, 1.0);
    auto lam = oracle::random_field(g, rng, 0.1, 2.0);
    const double e = weighted_diffusion(u, lam).energy;

    ScalarField lam2 = lam;
    for (auto& v : lam2.values) v *= 3.0;
    CHECK(weighted_diffusion(u, lam2).energy == Catch::Approx(3.0 * e).epsilon(1e-12));

    VectorField u2 = u;
    for (auto& v : u2.data) v *= 2.0;
    CHECK(weighted_diffusion(u2, lam).energy == Catch::Approx(4.0 * e).epsilon(1e-12));
}

TEST_CASE("diffusion gradients match finite differences") {
    Rng rng(7);
    Grid g({4, 4, 3});
    auto u = oracle::random_vfield(g, rng, 1.0);
    auto lam = oracle::random_field(g, rng, 0.1, 2.0);
    auto r = weighted_diffusion(u, lam);

    auto loss_u = [&](const std::vector<double>& x) {
        VectorField ux = u;
        ux.data = x;
        return weighted_diffusion(ux, lam).energy;
    };
    std::vector<std::size_t> probes;
    for (int k = 0; k < 25; ++k) probes.push_back(rng.below(u.data.size()));
    CHECK(oracle::fd_max_rel_err(loss_u, u.data, r.grad_u.data, probes) <= 1e-5);

    auto loss_lam = [&](const std::vector<double>& x) {
        ScalarField lx = lam;
        lx.values = x;
        return weighted_diffusion(u, lx).energy;
    };
    probes.clear();
    for (int k = 0; k < 25; ++k) probes.push_back(rng.below(lam.values.size()));
    CHECK(oracle::fd_max_rel_err(loss_lam, lam.values, r.grad_lam.values, probes) <= 1e-5);
}

TEST_CASE("beta penalty values and properties") {
    Grid g({2, 2});
    ScalarField ones(g, 1.0);
    CHECK(beta_penalty(ones, 0.7).energy == 0.0);

    Rng rng(8);
    auto any = oracle::random_field(g, rng, 0.05, 1.0);
    CHECK(beta_penalty(any, 0.0).energy == 0.0);

    // single-voxel direct evaluation: alpha' * ln 2 at lam_norm = 0.5
    Grid g1({2, 2});
    ScalarField half(g1, 0.5);
    const double want = 0.175 * std::log(2.0);
    CHECK(beta_penalty(half, 0.175).energy == Catch::Approx(want).epsilon(1e-12));

    CHECK(beta_penalty(any, 0.3).energy >= 0.0);
    CHECK_THROWS_AS(beta_penalty(any, -0.1), input_error);

    ScalarField bad(g, 1.5);
    CHECK_THROWS_AS(beta_penalty(bad, 0.1), input_error);

    // log-clamp floor keeps zero weights finite
    ScalarField zeros(g, 0.0);
    auto rz = beta_penalty(zeros, 1.0);
    CHECK(std::isfinite(rz.energy));
    for (double v : rz.grad.values) CHECK(std::isfinite(v));
}

TEST_CASE("beta penalty is monotone decreasing in each lam_norm and grad matches FD") {
    Rng rng(9);
    Grid g({3, 3});
    auto lam = oracle::random_field(g, rng, 0.1, 0.9);
    auto r = beta_penalty(lam, 0.4);
    for (double v : r.grad.values) CHECK(v < 0.0);

    auto loss = [&](const std::vector<double>& x) {
        ScalarField lx = lam;
        lx.values = x;
        return beta_penalty(lx, 0.4).energy;
    };
    std::vector<std::size_t> probes;
    for (std::size_t i = 0; i < lam.size(); ++i) probes.push_back(i);
    CHECK(oracle::fd_max_rel_err(loss, lam.values, r.grad.values, probes) <= 1e-5);
}

TEST_CASE("gaussian penalty values and properties") {
    Grid g({3, 3});
    ScalarField atmean(g, 3.796);
    CHECK(gaussian_penalty(atmean, 0.525, 3.796).energy == Catch::Approx(0.0).margin(1e-15));

    Rng rng(10);
    auto any = oracle::random_field(g, rng, 0.0, 5.0);
    CHECK(gaussian_penalty(any, 0.0, 1.0).energy == 0.0);

    // single voxel at lambda = 0: sigma' * (0 - 1)^2
    Grid g1({2, 2});
    ScalarField zero(g1, 0.0);
    CHECK(gaussian_penalty(zero, 0.525, 3.796).energy == Catch::Approx(0.525).epsilon(1e-12));

    CHECK(gaussian_penalty(any, 0.7, 2.0).energy >= 0.0);
    CHECK_THROWS_AS(gaussian_penalty(any, 0.5, 0.0), input_error);
    CHECK_THROWS_AS(gaussian_penalty(any, -0.5, 1.0), input_error);
}

TEST_CASE("gaussian penalty is strictly convex and grad matches FD") {
    Rng rng(11);
    Grid g({3, 3});
    auto a = oracle::random_field(g, rng, 0.0, 4.0);
    auto b = oracle::random_field(g, rng, 0.0, 4.0);
    const double sp = 0.8, lm = 2.0;
    ScalarField mid(g);
    for (std::size_t i = 0; i < g.voxel_count(); ++i)
        mid.values[i] = 0.5 * (a.values[i] + b.values[i]);
    const double ea = gaussian_penalty(a, sp, lm).energy;
    const double eb = gaussian_penalty(b, sp, lm).energy;
    const double em = gaussian_penalty(mid, sp, lm).energy;
    CHECK(em < 0.5 * (ea + eb));  // strict for a != b

    auto r = gaussian_penalty(a, sp, lm);
    auto loss = [&](const std::vector<double>& x) {
        ScalarField lx = a;
        lx.values = x;
        return gaussian_penalty(lx, sp, lm).energy;
    };
    std::vector<std::size_t> probes;
    for (std::size_t i = 0; i < a.size(); ++i) probes.push_back(i);
    CHECK(oracle::fd_max_rel_err(loss, a.values, r.grad.values, probes) <= 1e-5);
}
