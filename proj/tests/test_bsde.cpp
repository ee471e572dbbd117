#include "doctest.h"

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "pvi/bsde.hpp"

using namespace pvi;

namespace {

CoefficientSet obstacle_spec() {
    return builtin_problem("obstacle_put", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
}

PathEnsemble small_put_ensemble(const CoefficientSet& s, int n_paths, int n_steps,
                                std::uint64_t seed) {
    const TimeGrid grid(0.0, 1.0, n_steps);
    return simulate_paths(s, 0.0, Vec::Constant(1, 100.0), grid, n_paths, seed);
}

} // namespace

TEST_CASE("lsmc: constant terminal with no driver reproduces the constant") {
    CoefficientSet s = pvi_test::base_problem();
    s.terminal = [](VecRef) { return 7.0; };
    const TimeGrid grid(0.0, 1.0, 10);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Zero(1), grid, 2000, 17);
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 1.0, RegressionBasis{}, 2);
    double ymax = 0.0, zmax = 0.0, amax = 0.0;
    for (int p = 0; p < sol.n_paths; ++p) {
        for (int k = 0; k <= 10; ++k)
            ymax = std::max(ymax, std::abs(sol.y_at(p, k) - 7.0));
        for (int k = 0; k < 10; ++k)
            zmax = std::max(zmax, std::abs(sol.z_at(p, k, 0)));
        amax = std::max(amax, sol.a_at(p, 10));
    }
    CHECK(ymax <= 1e-10);
    CHECK(zmax <= 1e-10);
    CHECK(amax == 0.0);
    CHECK(sol.y0 == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("lsmc: linear driver discounts the terminal value (scalar ODE oracle)") {
    CoefficientSet s = pvi_test::base_problem();
    s.driver = [](double, VecRef, double y, VecRef) { return -0.05 * y; };
    s.lip_g = 0.05;
    s.terminal = [](VecRef) { return 1.0; };
    const TimeGrid grid(0.0, 1.0, 50);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Zero(1), grid, 1000, 4);
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 1.0, RegressionBasis{}, 2);
    CHECK(std::abs(sol.y0 - std::exp(-0.05)) <= std::max(3.0 * sol.y0_stderr, 1e-3));
}

TEST_CASE("lsmc: terminal condition holds exactly on every path") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 500, 20, 8);
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 16.0, RegressionBasis{}, 2);
    Vec xv(1);
    for (int p = 0; p < sol.n_paths; ++p) {
        xv[0] = e.state(p, 20, 0);
        CHECK(sol.y_at(p, 20) == s.terminal(xv));
    }
}

TEST_CASE("lsmc: the increasing part starts at zero and never decreases") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 2000, 25, 12);
    for (double alpha : {0.0, 16.0, 256.0}) {
        const PenalizedBsdeSolution sol =
            solve_penalized_lsmc(e, s, alpha, RegressionBasis{}, 2);
        for (int p = 0; p < sol.n_paths; ++p) {
            CHECK(sol.a_at(p, 0) == 0.0);
            for (int k = 0; k < 25; ++k)
                CHECK(sol.a_at(p, k + 1) >= sol.a_at(p, k));
        }
    }
}

TEST_CASE("lsmc: an inactive constraint makes the solution alpha-independent") {
    const CoefficientSet s = builtin_problem(
        "unconstrained_linear", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
    const PathEnsemble e = small_put_ensemble(s, 4000, 20, 3);
    const PenalizedBsdeSolution a = solve_penalized_lsmc(e, s, 0.0, RegressionBasis{}, 2);
    const PenalizedBsdeSolution b = solve_penalized_lsmc(e, s, 8.0, RegressionBasis{}, 2);
    CHECK(a.y0 == b.y0);
    CHECK(a.y == b.y);
    CHECK(increasing_part_stats(b).mean_total == 0.0);
}

TEST_CASE("lsmc: picard count barely matters in the contractive regime") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 4000, 50, 21);
    const double y1 = solve_penalized_lsmc(e, s, 4.0, RegressionBasis{}, 1).y0;
    const double y2 = solve_penalized_lsmc(e, s, 4.0, RegressionBasis{}, 2).y0;
    const double y3 = solve_penalized_lsmc(e, s, 4.0, RegressionBasis{}, 3).y0;
    CHECK(std::abs(y2 - y3) <= std::abs(y1 - y2) + 1e-12);
    CHECK(std::abs(y1 - y3) <= 1e-3);
}

TEST_CASE("lsmc: non-finite backward values raise a divergence error") {
    CoefficientSet s = pvi_test::base_problem();
    s.driver = [](double, VecRef, double, VecRef) {
        return std::numeric_limits<double>::infinity();
    };
    const TimeGrid grid(0.0, 1.0, 4);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Zero(1), grid, 16, 0);
    CHECK_THROWS_AS(solve_penalized_lsmc(e, s, 0.0, RegressionBasis{}, 2), DivergenceError);
}

TEST_CASE("lsmc: degenerate ensembles fall back to ridge regression") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    s.terminal = [](VecRef x) { return x[0] * x[0]; };
    const TimeGrid grid(0.0, 1.0, 5);
    const PathEnsemble e = simulate_paths(s, 0.0, Vec::Constant(1, 2.0), grid, 64, 0);
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 0.0, RegressionBasis{}, 2);
    CHECK(sol.y0 == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("lsmc: piecewise-linear basis agrees with the polynomial one") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 20000, 25, 77);
    RegressionBasis pl;
    pl.family = RegressionBasis::Family::PiecewiseLinear;
    pl.n_knots = 12;
    const double ypl = solve_penalized_lsmc(e, s, 64.0, pl, 2).y0;
    const double ypoly = solve_penalized_lsmc(e, s, 64.0, RegressionBasis{}, 2).y0;
    CHECK(std::abs(ypl - ypoly) <= 0.02 * std::abs(ypoly));
}

TEST_CASE("chain: zero drift preserves a linear terminal exactly") {
    CoefficientSet s = pvi_test::base_problem();
    s.terminal = [](VecRef x) { return x[0]; };
    const TimeGrid grid(0.0, 1.0, 50);
    const ChainDiscretization c = build_chain(s, grid, -10.0, 10.0, 100);
    const ValueSurface u = solve_penalized_chain(s, c, 1.0);
    for (int k = 0; k <= 50; ++k)
        for (int j = 0; j <= 100; ++j)
            CHECK(std::abs(u.at(k, j) - u.xs[j]) <= 1e-11);
}

TEST_CASE("chain: alpha = 0 gives the unconstrained value, below the obstacle deep in the money") {
    const CoefficientSet put = obstacle_spec();
    const CoefficientSet unconstrained = builtin_problem(
        "unconstrained_linear", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
    const TimeGrid grid(0.0, 1.0, 512);
    const ChainDiscretization c = build_chain(put, grid, 20.0, 500.0, 96);
    const ValueSurface u0 = solve_penalized_chain(put, c, 0.0);
    const ValueSurface ufree = solve_penalized_chain(unconstrained, c, 0.0);
    CHECK(u0.values == ufree.values);
    const double x_itm = 40.0;
    const double h_itm = 60.0;
    CHECK(u0.eval(0.0, x_itm) < h_itm);
}

TEST_CASE("chain: alpha-doubling contraction and nodewise comparison") {
    const CoefficientSet s = obstacle_spec();
    const TimeGrid grid(0.0, 1.0, 1024);
    const ChainDiscretization c = build_chain(s, grid, 20.0, 500.0, 150);
    const ValueSurface u64 = solve_penalized_chain(s, c, 64.0);
    const ValueSurface u128 = solve_penalized_chain(s, c, 128.0);
    const ValueSurface u256 = solve_penalized_chain(s, c, 256.0);
    double d1 = 0.0, d2 = 0.0;
    int bad = 0;
    for (std::size_t i = 0; i < u64.values.size(); ++i) {
        d1 = std::max(d1, std::abs(u128.values[i] - u64.values[i]));
        d2 = std::max(d2, std::abs(u256.values[i] - u128.values[i]));
        if (u64.values[i] > u128.values[i] + 1e-10 || u128.values[i] > u256.values[i] + 1e-10)
            ++bad;
    }
    CHECK(bad == 0);
    CHECK(d2 <= d1);
}

TEST_CASE("chain: refuses a non-contractive step size") {
    const CoefficientSet s = obstacle_spec();
    const TimeGrid grid(0.0, 1.0, 16);
    const ChainDiscretization c = build_chain(s, grid, 20.0, 500.0, 20);
    CHECK_THROWS_WITH_AS(solve_penalized_chain(s, c, 256.0),
                         doctest::Contains("refine"), StepSizeError);
}

TEST_CASE("lsmc matches the chain value on the penalized put") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 20000, 25, 5150);
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 64.0, RegressionBasis{}, 2);
    const TimeGrid cgrid(0.0, 1.0, 1024);
    const ChainDiscretization c = build_chain(s, cgrid, 20.0, 500.0, 150);
    const ValueSurface u = solve_penalized_chain(s, c, 64.0);
    const double ref = u.eval(0.0, 100.0);
    CHECK(std::abs(sol.y0 - ref) <= std::max(3.0 * sol.y0_stderr, 0.02 * std::abs(ref)));
}

TEST_CASE("increasing part stats: trivial cases and growth in alpha") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 10000, 25, 6);

    const PenalizedBsdeSolution a0 = solve_penalized_lsmc(e, s, 0.0, RegressionBasis{}, 2);
    const IncreasingPartStats st0 = increasing_part_stats(a0);
    CHECK(st0.mean_total == 0.0);
    CHECK(st0.fraction_active == 0.0);

    double prev = -1.0;
    for (double alpha : {64.0, 128.0, 256.0}) {
        const PenalizedBsdeSolution sol =
            solve_penalized_lsmc(e, s, alpha, RegressionBasis{}, 2);
        const IncreasingPartStats st = increasing_part_stats(sol);
        CHECK(st.mean_total >= prev);
        CHECK(st.max_total >= st.mean_total);
        prev = st.mean_total;
    }
}

TEST_CASE("lsmc: the literal increasing-part variant includes the driver mass") {
    const CoefficientSet s = obstacle_spec();
    const PathEnsemble e = small_put_ensemble(s, 2000, 20, 9);
    LsmcOptions opt;
    opt.literal_increasing_part = true;
    const PenalizedBsdeSolution sol = solve_penalized_lsmc(e, s, 0.0, RegressionBasis{}, opt);
    // With alpha = 0 the literal reading accumulates only the (negative)
    // discounting driver, so the "increasing part" drops below zero.
    CHECK(increasing_part_stats(sol).mean_total < 0.0);
}
