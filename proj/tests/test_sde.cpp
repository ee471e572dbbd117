#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "oracles.hpp"
#include "pvi/sde.hpp"

using namespace pvi;

namespace {

CoefficientSet lognormal_spec() {
    return builtin_problem("unconstrained_linear",
                           {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
}

} // namespace

TEST_CASE("degenerate dynamics keep every path constant") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    const TimeGrid grid(0.0, 1.0, 8);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Constant(1, 3.0), grid, 16, 5);
    for (int p = 0; p < e.n_paths; ++p)
        for (int k = 0; k <= grid.n_steps; ++k)
            CHECK(e.state(p, k, 0) == 3.0);
}

TEST_CASE("deterministic unit drift is integrated exactly by Euler") {
    CoefficientSet s = pvi_test::base_problem();
    s.drift = [](double, VecRef x) { return Vec(Vec::Ones(x.size())); };
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    const TimeGrid grid(0.0, 1.0, 4);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Zero(1), grid, 3, 1);
    for (int p = 0; p < e.n_paths; ++p)
        CHECK(e.state(p, 4, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("lognormal terminal mean matches the closed form within Monte Carlo error") {
    const CoefficientSet s = lognormal_spec();
    const int n_paths = 100000;
    const double x0 = 100.0, rate = 0.05;

    auto sample_mean = [&](int n_steps) {
        const TimeGrid grid(0.0, 1.0, n_steps);
        const PathEnsemble e = simulate_paths(s, 0.0, Vec::Constant(1, x0), grid, n_paths, 99);
        double m = 0.0, sq = 0.0;
        for (int p = 0; p < n_paths; ++p) {
            const double xt = e.state(p, n_steps, 0);
            m += xt;
            sq += xt * xt;
        }
        m /= n_paths;
        const double sd = std::sqrt((sq / n_paths - m * m) / (n_paths - 1));
        return std::pair<double, double>(m, sd);
    };

    const auto [mean50, sd50] = sample_mean(50);
    const double exact = x0 * std::exp(rate);
    CHECK(std::abs(mean50 - exact) <= 3.0 * sd50 + 1e-9);

    // The Euler mean obeys m_{k+1} = m_k (1 + r dt) exactly, so the scheme's
    // mean bias is computable without sampling and halves with n_steps.
    auto euler_mean = [&](int n) { return x0 * std::pow(1.0 + rate / n, n); };
    const double bias50 = std::abs(euler_mean(50) - exact);
    const double bias100 = std::abs(euler_mean(100) - exact);
    CHECK(bias100 / bias50 == doctest::Approx(0.5).epsilon(0.03));
    CHECK(std::abs(mean50 - euler_mean(50)) <= 3.0 * sd50 + 1e-9);
}

TEST_CASE("replay determinism: identical arguments give bitwise-identical ensembles") {
    const CoefficientSet s = lognormal_spec();
    const TimeGrid grid(0.0, 1.0, 16);
    const PathEnsemble a = simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, 512, 2024);
    const PathEnsemble b = simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, 512, 2024);
    CHECK(a.states == b.states);
    CHECK(a.increments == b.increments);
}

TEST_CASE("worker count does not change the ensemble") {
    const CoefficientSet s = lognormal_spec();
    const TimeGrid grid(0.0, 1.0, 8);
    setenv("PVI_THREADS", "1", 1);
    const PathEnsemble a = simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, 4000, 7);
    setenv("PVI_THREADS", "5", 1);
    const PathEnsemble b = simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, 4000, 7);
    unsetenv("PVI_THREADS");
    CHECK(a.states == b.states);
    CHECK(a.increments == b.increments);
}

TEST_CASE("pooled increments pass mean and variance sanity checks") {
    CoefficientSet s = pvi_test::base_problem();
    const int n_paths = 20000, n_steps = 50;
    const TimeGrid grid(0.0, 1.0, n_steps);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Zero(1), grid, n_paths, 31337);
    const double dt = grid.dt();
    const std::size_t n = e.increments.size();
    REQUIRE(n >= 1000000);
    double m = 0.0, v = 0.0;
    for (double w : e.increments)
        m += w;
    m /= static_cast<double>(n);
    for (double w : e.increments)
        v += (w - m) * (w - m);
    v /= static_cast<double>(n - 1);
    CHECK(std::abs(m) <= 4.0 * std::sqrt(dt / static_cast<double>(n)));
    CHECK(v == doctest::Approx(dt).epsilon(0.01));
}

TEST_CASE("non-finite states are reported with path and step") {
    CoefficientSet s = pvi_test::base_problem();
    s.drift = [](double, VecRef x) { return Vec(1e160 * (x.array() + 1.0)); };
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    const TimeGrid grid(0.0, 1.0, 8);
    CHECK_THROWS_WITH_AS(simulate_paths(s, 0.0, Vec::Ones(1), grid, 2, 0),
                         doctest::Contains("step"), SimulationError);
}

TEST_CASE("chain with zero coefficients keeps all mass in place") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    const TimeGrid grid(0.0, 1.0, 4);
    const ChainDiscretization c = build_chain(s, grid, -1.0, 1.0, 10);
    CHECK(c.frozen_boundary_nodes == 0);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j <= 10; ++j) {
            const auto id = c.idx(k, j);
            double p_self = 0.0;
            for (int b = 0; b < 3; ++b)
                if (c.targets[id][b] == j)
                    p_self += c.probs[id][b];
            CHECK(p_self == doctest::Approx(1.0));
        }
}

TEST_CASE("chain interior probabilities match the hand-derived trinomial weights") {
    CoefficientSet s = pvi_test::base_problem();
    const double sig = 0.7;
    s.diffusion = [sig](double, VecRef x) {
        return Mat(sig * Mat::Identity(x.size(), x.size()));
    };
    const TimeGrid grid(0.0, 1.0, 20);
    const int n_space = 10;
    const ChainDiscretization c = build_chain(s, grid, -2.0, 2.0, n_space);
    const double dx = c.dx;
    const double expected = sig * sig * grid.dt() / (2.0 * dx * dx);
    const auto id = c.idx(3, 5);
    CHECK(c.probs[id][0] == doctest::Approx(expected).epsilon(1e-12)); // down
    CHECK(c.probs[id][2] == doctest::Approx(expected).epsilon(1e-12)); // up
    CHECK(c.probs[id][1] == doctest::Approx(1.0 - 2.0 * expected).epsilon(1e-12));
}

TEST_CASE("chain moments match Euler moments at every non-frozen node") {
    const CoefficientSet s =
        builtin_problem("obstacle_put", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
    const TimeGrid grid(0.0, 1.0, 512);
    const ChainDiscretization c = build_chain(s, grid, 20.0, 500.0, 96);
    const double dt = grid.dt();
    Vec xv(1);
    int checked = 0;
    for (int k = 0; k < grid.n_steps; k += 37) {
        const double t = grid.time(k);
        for (int j = 0; j <= c.n_space; ++j) {
            const auto id = c.idx(k, j);
            if (c.targets[id][0] == j && c.targets[id][1] == j && c.probs[id][0] == 1.0 &&
                (j == 0 || j == c.n_space))
                continue; // frozen boundary
            xv[0] = c.x(j);
            const double m = s.drift(t, xv)[0] * dt;
            const double v = std::pow(s.diffusion(t, xv)(0, 0), 2) * dt;
            double psum = 0.0, mean = 0.0, second = 0.0;
            for (int b = 0; b < 3; ++b) {
                const double delta = (c.targets[id][b] - j) * c.dx;
                psum += c.probs[id][b];
                mean += c.probs[id][b] * delta;
                second += c.probs[id][b] * delta * delta;
            }
            CHECK(std::abs(psum - 1.0) <= 1e-12);
            CHECK(std::abs(mean - m) <= 1e-12);
            CHECK(std::abs(second - m * m - v) <= 1e-12);
            ++checked;
        }
    }
    CHECK(checked > 1000);
    // only the outward-drift/diffusion-dominated edges may be frozen
    CHECK(c.frozen_boundary_nodes <= 2 * grid.n_steps);
}

TEST_CASE("chain construction fails loudly when the stencil is infeasible") {
    const CoefficientSet s =
        builtin_problem("obstacle_put", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
    const TimeGrid grid(0.0, 1.0, 16); // dt far too large for dx = 1
    CHECK_THROWS_WITH_AS(build_chain(s, grid, 20.0, 500.0, 480),
                         doctest::Contains("node"), DiscretizationError);
}

TEST_CASE("ensemble binary dump round-trips and has the documented header") {
    const CoefficientSet s = lognormal_spec();
    const TimeGrid grid(0.0, 1.0, 6);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, 32, 9001);
    const std::string path = "/tmp/pvi_test_ensemble.bin";
    save_ensemble(path, e);

    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    unsigned char head[36];
    REQUIRE(std::fread(head, 1, sizeof head, f) == sizeof head);
    std::fclose(f);
    CHECK(head[0] == 'P');
    CHECK(head[1] == 'V');
    CHECK(head[2] == 'I');
    CHECK(head[3] == '1');
    auto u64le = [&](int off) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(head[off + i]) << (8 * i);
        return v;
    };
    CHECK(u64le(4) == 1);     // dim
    CHECK(u64le(12) == 32);   // n_paths
    CHECK(u64le(20) == 6);    // n_steps
    CHECK(u64le(28) == 9001); // seed

    const PathEnsemble r = load_ensemble(path, 0.0, 1.0);
    CHECK(r.states == e.states);
    CHECK(r.increments == e.increments);
    CHECK(r.seed == e.seed);
    std::remove(path.c_str());
}
