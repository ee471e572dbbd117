#pragma once

#include <optional>
#include <utility>

#include "pvi/surface.hpp"

namespace pvi {

// 1D theta-scheme on a uniform grid. theta applies to the linear
// convection-diffusion part; the nonlinear driver g + alpha*phi^- is either
// lagged at the previous time level or resolved per node by a damped fixed
// point (semi-implicit), which removes the dt*alpha*lip_phi restriction.
struct FdScheme {
    double theta = 1.0; // 0 explicit, 1 implicit, 0.5 Crank-Nicolson
    enum class Penalty { ExplicitLagged, SemiImplicit };
    Penalty penalty = Penalty::SemiImplicit;
    double x_min = 0.0;
    double x_max = 0.0;
    int n_space = 0; // intervals; nodes are n_space + 1
    enum class Boundary { LinearExtrapolation, DirichletTerminalExtension };
    Boundary boundary = Boundary::LinearExtrapolation;
};

// Discrete complementarity diagnostics of min(-d_t u - F0, phi) on the
// interior of a surface's grid. Arrays are time-major over interior nodes
// (times 0..n_steps-1, nodes 1..n-1). Norms skip two kinds of nodes: spatial
// jumps above 10*dx (potential discontinuities) and the terminal layer
// t > T - 0.05*(T - t0), where a kinked terminal condition dominates the
// one-sided time difference at any resolution.
struct ResidualReport {
    double sup_residual = 0.0; // max |min(pde_residual, constraint_value)|
    double l1_residual = 0.0;  // sum of the absolute complementarity map
    double min_pde_residual = 0.0;
    double min_constraint = 0.0;
    double max_min_map = 0.0;
    int nodes_pde_active = 0;
    int nodes_phi_active = 0;
    int excluded_nodes = 0;
    int interior_times = 0;
    int interior_nodes = 0;
    std::vector<double> pde_residual;
    std::vector<double> constraint_value;
};

ValueSurface solve_penalized_fd(const CoefficientSet& spec, const FdScheme& scheme,
                                const TimeGrid& grid, double alpha);

// Obstacle case phi = y - h(t,x): alpha = 0 stepping followed by the nodewise
// projection u <- max(u, h). The mass companion accumulates the projected
// amount transported by the same linear operator.
ValueSurface solve_projected_obstacle_fd(const CoefficientSet& spec, const FdScheme& scheme,
                                         const TimeGrid& grid);

enum class LinearPayoff { Put, One };

// Discounted expectation of the payoff under lognormal dynamics with drift
// equal to rate and linear driver g = -rate*y.
double closed_form_linear(double rate, double vol, double strike, double x0, double T,
                          LinearPayoff payoff = LinearPayoff::Put);

// Adaptive-quadrature route to the same expectation (oracle for the closed form).
double lognormal_quadrature(double rate, double vol, double strike, double x0, double T,
                            LinearPayoff payoff = LinearPayoff::Put, double tol = 1e-10);

struct RefineRow {
    int level = 0;
    int n_space = 0;
    int n_steps = 0;
    double u0 = 0.0;
    std::optional<double> delta_prev;
    std::optional<double> empirical_order;
};

// Runs the penalized solver across refinement levels and reports u(t0, x0),
// successive differences, and empirical orders (against the oracle value when
// one is supplied, otherwise from successive differences). Levels must refine
// 2x in space and 4x in time for the explicit scheme, 2x/2x otherwise.
std::vector<RefineRow> refine_study(const CoefficientSet& spec, const FdScheme& scheme,
                                    double alpha,
                                    const std::vector<std::pair<int, int>>& levels, double x0,
                                    std::optional<double> oracle_u0 = std::nullopt);

} // namespace pvi
