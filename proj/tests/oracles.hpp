#pragma once

// Test-only oracles, coded independently of the library's solvers.

#include "pvi/problem.hpp"

namespace pvi_test {

// Recombining Cox-Ross-Rubinstein tree for an American put, exercise
// comparison at every node.
double crr_american_put(double s0, double strike, double rate, double vol, double maturity,
                        int n_steps);

// European put on the same tree (discounted expectation, no exercise).
double crr_european_put(double s0, double strike, double rate, double vol, double maturity,
                        int n_steps);

// Base problem for unit tests: dim 1, horizon 1, zero drift, unit diffusion,
// zero driver, constraint identically 1, zero terminal. Override fields as
// needed per test.
pvi::CoefficientSet base_problem();

} // namespace pvi_test
