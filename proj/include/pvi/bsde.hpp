#pragma once

#include "pvi/surface.hpp"

namespace pvi {

// Conditional-expectation regression basis. Features are built on coordinates
// normalized to the per-step empirical quantile box of the ensemble.
struct RegressionBasis {
    enum class Family { Polynomial, PiecewiseLinear };
    Family family = Family::Polynomial;
    int degree = 4;  // polynomial total degree
    int n_knots = 8; // piecewise-linear knots (1D only)
    double quantile_lo = 0.001;
    double quantile_hi = 0.999;
    // Precondition the y-regression by the terminal function: fit the
    // residual Y - psi(x) and add psi back. Puts the payoff shape (kink
    // included) into the approximation space, which a low-degree polynomial
    // cannot represent on its own.
    bool terminal_shift = true;
};

struct LsmcOptions {
    int picard_iters = 2;
    // Accumulate the literal (g + alpha*phi^-)*dt instead of alpha*phi^-*dt
    // in the increasing part; kept for comparison runs.
    bool literal_increasing_part = false;
};

// Per-path backward solution of the penalized BSDE with driver g + alpha*phi^-.
struct PenalizedBsdeSolution {
    TimeGrid grid;
    int dim = 1;
    int n_paths = 0;
    double alpha = 0.0;
    std::vector<double> y; // n_paths x (n_steps+1)
    std::vector<double> z; // n_paths x n_steps x dim
    std::vector<double> a; // n_paths x (n_steps+1), cumulative, a[.][0] = 0
    std::vector<double> x_states; // copy of the ensemble states, same layout
    double y0 = 0.0;
    double y0_stderr = 0.0;

    double y_at(int p, int k) const {
        return y[static_cast<std::size_t>(p) * (grid.n_steps + 1) + k];
    }
    double z_at(int p, int k, int c) const {
        return z[(static_cast<std::size_t>(p) * grid.n_steps + k) * dim + c];
    }
    double a_at(int p, int k) const {
        return a[static_cast<std::size_t>(p) * (grid.n_steps + 1) + k];
    }
};

// Least-squares Monte Carlo backward induction along a simulated ensemble.
// At each step the continuation C_k and Z_k come from regressing the realized
// backward values Y_{k+1} and Y_{k+1}*dW_k/dt on basis(X_k); the driver's
// y-argument is resolved from C_k by Picard iteration while
// dt*(lip_g + alpha*lip_phi) <= 0.5 and by an implicit per-path scalar solve
// (tolerance 1e-12) beyond that, which keeps stiff penalty levels usable on
// coarse time grids. The regression targets stay pathwise-realized
// (Longstaff-Schwartz style) so basis misfit does not compound through the
// penalty; `y` reports the fitted per-point estimates.
PenalizedBsdeSolution solve_penalized_lsmc(const PathEnsemble& ensemble,
                                           const CoefficientSet& spec, double alpha,
                                           const RegressionBasis& basis,
                                           const LsmcOptions& options);
PenalizedBsdeSolution solve_penalized_lsmc(const PathEnsemble& ensemble,
                                           const CoefficientSet& spec, double alpha,
                                           const RegressionBasis& basis, int picard_iters);

// Exact backward dynamic programming on the deterministic chain. The
// y-argument of the driver is resolved implicitly by a one-dimensional fixed
// point to tolerance 1e-12; requires dt*(lip_g + alpha*lip_phi) < 1.
// The returned surface carries the cumulative penalization mass companion.
ValueSurface solve_penalized_chain(const CoefficientSet& spec,
                                   const ChainDiscretization& chain, double alpha);

struct IncreasingPartStats {
    double mean_total = 0.0;     // E[A_T]
    double max_total = 0.0;      // max over paths of A_T
    double fraction_active = 0.0; // fraction of (path, step) with a positive increment
};
IncreasingPartStats increasing_part_stats(const PenalizedBsdeSolution& sol);

} // namespace pvi
