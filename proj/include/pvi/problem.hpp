#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pvi/errors.hpp"

namespace pvi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

using DriftFn = std::function<Vec(double, VecRef)>;
using DiffusionFn = std::function<Mat(double, VecRef)>;
using DriverFn = std::function<double(double, VecRef, double, VecRef)>;
using ConstraintFn = std::function<double(double, VecRef, double, VecRef)>;
using TerminalFn = std::function<double(VecRef)>;
using ObstacleFn = std::function<double(double, VecRef)>;

// A constrained-BSDE problem instance: forward coefficients (b, sigma),
// driver g, constraint phi (feasible means phi >= 0), terminal psi, plus the
// declared Lipschitz/growth constants used by the validation probes.
// Coefficient callables must be pure and safe to call from several threads.
struct CoefficientSet {
    int dim = 1;
    double horizon = 1.0;
    DriftFn drift;
    DiffusionFn diffusion;
    DriverFn driver;
    ConstraintFn constraint;
    TerminalFn terminal;
    double lip_bx = 0.0;  // joint Lipschitz constant of b and sigma in x
    double lip_g = 0.0;   // Lipschitz constant of g in (y, z)
    double lip_phi = 0.0; // Lipschitz constant of phi in (y, z)
    int growth_p = 0;     // polynomial growth exponent

    // Catalog metadata (empty/default for user-built problems).
    std::string name;
    ObstacleFn obstacle;  // set iff the constraint has the form y - h(t, x)
    double x0_hint = 0.0; // conventional evaluation point for reports

    bool has_obstacle() const { return static_cast<bool>(obstacle); }
    void check() const; // structural invariants: dim >= 1, horizon > 0, maps set
};

struct ValidationReport {
    struct Violation {
        std::string coefficient;
        std::vector<double> sample_a; // flattened arguments of the first evaluation
        std::vector<double> sample_b; // flattened arguments of the second evaluation
        double observed_slope = 0.0;
    };
    std::map<std::string, double> lipschitz_estimates;
    std::map<std::string, double> growth_estimates;
    std::vector<Violation> violations;
};

// Probes the declared Lipschitz/growth constants on random argument pairs
// drawn uniformly from [-box_radius, box_radius] per argument. Deterministic
// for a given seed. Slopes exceeding the declared constant by more than a
// relative slack of 1e-9 are reported as violations.
ValidationReport validate_problem(const CoefficientSet& spec, int n_samples,
                                  double box_radius, std::uint64_t seed);

// Benchmark catalog. Names: unconstrained_linear, obstacle_put, z_constraint.
// Required params: rate, strike, vol (unconstrained_linear, obstacle_put);
// slope (z_constraint). Optional for all: drift (default rate), T (default 1),
// x0 (default strike); z_constraint also defaults rate 0.05, strike 100,
// vol 0.2. Unknown names, unknown keys, and missing required keys are errors.
//
// Assumption (H) holds for every entry by construction: psi and h are bounded
// above (by the strike), g is nonincreasing in y, so the constant process
// y' = strike (z' = 0, A' = accumulated -g) is a g-supersolution satisfying
// the constraint; for unconstrained_linear the constraint is identically 1.
CoefficientSet builtin_problem(const std::string& name,
                               const std::map<std::string, double>& params);

} // namespace pvi
