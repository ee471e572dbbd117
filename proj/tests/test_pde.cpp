#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "pvi/pde.hpp"

using namespace pvi;

namespace {

CoefficientSet obstacle_spec() {
    return builtin_problem("obstacle_put", {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
}

CoefficientSet unconstrained_spec() {
    return builtin_problem("unconstrained_linear",
                           {{"rate", 0.05}, {"strike", 100.0}, {"vol", 0.2}});
}

FdScheme put_scheme(int n_space, double theta = 1.0) {
    FdScheme sc;
    sc.theta = theta;
    sc.x_min = 20.0;
    sc.x_max = 500.0;
    sc.n_space = n_space;
    return sc;
}

} // namespace

TEST_CASE("fd: constants solve the scheme exactly at every theta and alpha") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    s.terminal = [](VecRef) { return 5.0; };
    const TimeGrid grid(0.0, 1.0, 20);
    for (double theta : {0.0, 0.5, 1.0})
        for (auto penalty : {FdScheme::Penalty::ExplicitLagged, FdScheme::Penalty::SemiImplicit})
            for (double alpha : {0.0, 7.0}) {
                FdScheme sc;
                sc.theta = theta;
                sc.penalty = penalty;
                sc.x_min = -1.0;
                sc.x_max = 1.0;
                sc.n_space = 16;
                const ValueSurface u = solve_penalized_fd(s, sc, grid, alpha);
                for (double v : u.values)
                    CHECK(v == doctest::Approx(5.0).epsilon(1e-13));
            }
}

TEST_CASE("fd: unconstrained benchmark matches the closed form, independent of alpha") {
    const CoefficientSet s = unconstrained_spec();
    const double cf = closed_form_linear(0.05, 0.2, 100.0, 100.0, 1.0);
    const FdScheme sc = put_scheme(400);
    const TimeGrid grid(0.0, 1.0, 400);
    for (double alpha : {0.0, 1.0, 1024.0}) {
        const ValueSurface u = solve_penalized_fd(s, sc, grid, alpha);
        CHECK(std::abs(u.eval(0.0, 100.0) - cf) <= 0.005 * cf);
    }
}

TEST_CASE("fd: alpha is inert when the constraint never binds") {
    const CoefficientSet s = unconstrained_spec();
    const TimeGrid grid(0.0, 1.0, 100);
    FdScheme sc = put_scheme(120);
    sc.penalty = FdScheme::Penalty::ExplicitLagged;
    const ValueSurface a = solve_penalized_fd(s, sc, grid, 0.0);
    const ValueSurface b = solve_penalized_fd(s, sc, grid, 1024.0);
    CHECK(a.values == b.values); // the penalty term is exactly zero

    sc.penalty = FdScheme::Penalty::SemiImplicit;
    const ValueSurface c = solve_penalized_fd(s, sc, grid, 0.0);
    const ValueSurface d = solve_penalized_fd(s, sc, grid, 1024.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < c.values.size(); ++i)
        diff = std::max(diff, std::abs(c.values[i] - d.values[i]));
    CHECK(diff <= 1e-12);
}

TEST_CASE("projected scheme with an unreachable obstacle equals the unpenalized solve bitwise") {
    CoefficientSet s = obstacle_spec();
    s.obstacle = [](double, VecRef) { return -1e10; };
    s.constraint = [](double, VecRef, double y, VecRef) { return y + 1e10; };
    const FdScheme sc = put_scheme(100);
    const TimeGrid grid(0.0, 1.0, 50);
    const ValueSurface proj = solve_projected_obstacle_fd(s, sc, grid);
    const ValueSurface pen0 = solve_penalized_fd(s, sc, grid, 0.0);
    CHECK(proj.values == pen0.values);
}

TEST_CASE("projected scheme: a stationary obstacle with frozen dynamics is a fixed point") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    s.terminal = [](VecRef x) { return std::max(100.0 - x[0], 0.0); };
    s.obstacle = [](double, VecRef x) { return std::max(100.0 - x[0], 0.0); };
    s.constraint = [](double, VecRef x, double y, VecRef) {
        return y - std::max(100.0 - x[0], 0.0);
    };
    const FdScheme sc = put_scheme(64);
    const TimeGrid grid(0.0, 1.0, 16);
    const ValueSurface u = solve_projected_obstacle_fd(s, sc, grid);
    for (int k = 0; k <= 16; ++k)
        for (int j = 0; j < u.n_nodes(); ++j)
            CHECK(u.at(k, j) == doctest::Approx(std::max(100.0 - u.xs[j], 0.0)).epsilon(1e-13));
}

TEST_CASE("projected scheme tracks an independently coded exercise tree") {
    const CoefficientSet s = obstacle_spec();
    const ValueSurface u = solve_projected_obstacle_fd(s, put_scheme(200), TimeGrid(0.0, 1.0, 200));
    const double tree = pvi_test::crr_american_put(100.0, 100.0, 0.05, 0.2, 1.0, 500);
    CHECK(std::abs(u.eval(0.0, 100.0) - tree) <= 0.01 * tree);
}

TEST_CASE("closed form: deterministic limit, pure discounting, quadrature agreement") {
    const double rate = 0.05, T = 1.0;
    // vol -> 0 with x0 e^{rT} below the strike
    const double v0 = closed_form_linear(rate, 1e-8, 100.0, 80.0, T);
    CHECK(v0 == doctest::Approx(std::exp(-rate * T) * 100.0 - 80.0).epsilon(1e-9));
    CHECK(closed_form_linear(rate, 0.2, 100.0, 100.0, T, LinearPayoff::One) ==
          doctest::Approx(std::exp(-rate * T)).epsilon(1e-15));
    const double cf = closed_form_linear(rate, 0.2, 100.0, 100.0, T);
    const double quad = lognormal_quadrature(rate, 0.2, 100.0, 100.0, T);
    CHECK(std::abs(cf - quad) <= 1e-8);
    CHECK_THROWS_AS(closed_form_linear(rate, -0.1, 100.0, 100.0, T), ConfigError);
    CHECK_THROWS_AS(closed_form_linear(rate, 0.2, 100.0, 100.0, 0.0), ConfigError);
}

TEST_CASE("fd: the gap to the projected oracle decays like 1/alpha") {
    const CoefficientSet s = obstacle_spec();
    const FdScheme sc = put_scheme(400);
    const TimeGrid grid(0.0, 1.0, 400);
    const ValueSurface proj = solve_projected_obstacle_fd(s, sc, grid);
    double prev_gap = 0.0;
    for (double alpha : {64.0, 128.0, 256.0}) {
        const ValueSurface u = solve_penalized_fd(s, sc, grid, alpha);
        double gap = 0.0;
        for (std::size_t i = 0; i < u.values.size(); ++i)
            gap = std::max(gap, proj.values[i] - u.values[i]);
        if (prev_gap > 0.0) {
            CHECK(gap < prev_gap);
            CHECK(gap / prev_gap >= 0.3);
            CHECK(gap / prev_gap <= 0.7);
        }
        prev_gap = gap;
    }
}

TEST_CASE("fd invariants: alpha-monotone, below the projection, above the shifted obstacle") {
    const CoefficientSet s = obstacle_spec();
    const FdScheme sc = put_scheme(240);
    const TimeGrid grid(0.0, 1.0, 200);
    const ValueSurface proj = solve_projected_obstacle_fd(s, sc, grid);

    // u_projected >= h exactly, by construction.
    Vec xv(1);
    for (int k = 0; k <= grid.n_steps; ++k)
        for (int j = 0; j < proj.n_nodes(); ++j) {
            xv[0] = proj.xs[j];
            CHECK(proj.at(k, j) >= s.obstacle(grid.time(k), xv) - 1e-12);
        }

    ValueSurface prev;
    for (double alpha : {16.0, 64.0, 1024.0}) {
        const ValueSurface u = solve_penalized_fd(s, sc, grid, alpha);
        int above_proj = 0, below_prev = 0, below_obstacle = 0;
        for (int k = 0; k <= grid.n_steps; ++k)
            for (int j = 0; j < u.n_nodes(); ++j) {
                if (u.at(k, j) > proj.at(k, j) + 1e-10)
                    ++above_proj;
                if (!prev.values.empty() && prev.at(k, j) > u.at(k, j) + 1e-10)
                    ++below_prev;
                xv[0] = u.xs[j];
                // empirical O(1/alpha) domination gap, constant frozen at 6
                if (u.at(k, j) < s.obstacle(grid.time(k), xv) - 6.0 / alpha)
                    ++below_obstacle;
            }
        CHECK(above_proj == 0);
        CHECK(below_prev == 0);
        CHECK(below_obstacle == 0);
        prev = u;
    }
}

TEST_CASE("refine_study: constants collapse every level") {
    CoefficientSet s = pvi_test::base_problem();
    s.diffusion = [](double, VecRef x) { return Mat(Mat::Zero(x.size(), x.size())); };
    s.terminal = [](VecRef) { return 3.0; };
    FdScheme sc;
    sc.x_min = -1.0;
    sc.x_max = 1.0;
    const auto rows = refine_study(s, sc, 1.0, {{8, 4}, {16, 8}, {32, 16}}, 0.0);
    REQUIRE(rows.size() == 3);
    CHECK(!rows[0].delta_prev);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(*rows[i].delta_prev == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("refine_study: implicit Euler shows first order in dt against the closed form") {
    const CoefficientSet s = unconstrained_spec();
    const double cf = closed_form_linear(0.05, 0.2, 100.0, 100.0, 1.0);
    // dx^2-matched refinement (2x space, 4x time); x0 lies on a node at each level
    const auto rows =
        refine_study(s, put_scheme(0), 1.0, {{120, 50}, {240, 200}, {480, 800}}, 100.0, cf);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].empirical_order.has_value());
        CHECK(*rows[i].empirical_order >= 0.8);
        CHECK(*rows[i].empirical_order <= 1.2);
    }
}

TEST_CASE("refine_study: obstacle refinements shrink monotonically") {
    const CoefficientSet s = obstacle_spec();
    const auto rows = refine_study(s, put_scheme(0), 256.0,
                                   {{100, 100}, {200, 200}, {400, 400}}, 100.0);
    REQUIRE(rows.size() == 3);
    CHECK(std::abs(*rows[2].delta_prev) < std::abs(*rows[1].delta_prev));
}

TEST_CASE("refine_study: rejects level lists that do not refine correctly") {
    const CoefficientSet s = unconstrained_spec();
    CHECK_THROWS_AS(refine_study(s, put_scheme(0), 1.0, {{100, 100}, {200, 200}}, 100.0),
                    ConfigError);
    CHECK_THROWS_AS(
        refine_study(s, put_scheme(0), 1.0, {{100, 100}, {150, 200}, {300, 400}}, 100.0),
        ConfigError);
}

TEST_CASE("fd: explicit stepping enforces the diffusion CFL bound") {
    const CoefficientSet s = unconstrained_spec();
    FdScheme sc = put_scheme(400, 0.0);
    CHECK_THROWS_AS(solve_penalized_fd(s, sc, TimeGrid(0.0, 1.0, 100), 0.0),
                    DiscretizationError);
}

TEST_CASE("fd: configuration errors are rejected") {
    const CoefficientSet s = unconstrained_spec();
    FdScheme sc = put_scheme(100);
    sc.theta = 1.5;
    CHECK_THROWS_AS(solve_penalized_fd(s, sc, TimeGrid(0.0, 1.0, 10), 0.0), ConfigError);
    CHECK_THROWS_AS(solve_projected_obstacle_fd(s, put_scheme(100), TimeGrid(0.0, 1.0, 10)),
                    ShapeError); // no obstacle form
}

TEST_CASE("value surfaces round-trip through the CSV format") {
    const CoefficientSet s = obstacle_spec();
    const ValueSurface u = solve_penalized_fd(s, put_scheme(24), TimeGrid(0.0, 1.0, 8), 16.0);
    const std::string path = "/tmp/pvi_test_surface.csv";
    write_surface_csv(path, u);
    const ValueSurface r = read_surface_csv(path);
    REQUIRE(r.xs.size() == u.xs.size());
    REQUIRE(r.n_times() == u.n_times());
    for (std::size_t i = 0; i < u.values.size(); ++i)
        CHECK(r.values[i] == u.values[i]); // 17 significant digits round-trip doubles
    std::remove(path.c_str());
}
