#pragma once

#include "pvi/bsde.hpp"
#include "pvi/pde.hpp"

namespace pvi {

enum class SweepMethod { Lsmc, Chain, Fd };

// Resources shared by every member of a penalization sweep. The grid and the
// evaluation point (grid.t0, x0) are common to all methods; chain/fd use the
// spatial box, lsmc uses the Monte Carlo block with a shared seed so every
// alpha sees the same ensemble.
struct SweepResources {
    TimeGrid grid;
    double x0 = 0.0;
    // chain
    double x_min = 0.0, x_max = 0.0;
    int n_space = 0;
    // fd
    FdScheme scheme;
    // lsmc
    int n_paths = 0;
    std::uint64_t seed = 0;
    RegressionBasis basis;
    int picard_iters = 2;
};

struct ConvergenceReport {
    std::vector<double> alphas;
    std::vector<double> u0;        // value at (t0, x0) per alpha
    std::vector<double> u0_stderr; // zeros for deterministic methods
    struct PairStats {
        int count = 0;
        double max_decrease = 0.0;
    };
    std::vector<PairStats> monotonicity_violations; // per consecutive alpha pair
    std::vector<double> cauchy_deltas;              // sup-norm differences per pair
    std::vector<double> a_totals;                   // E[A_T] or transported constraint mass
    double limit_estimate = 0.0;                    // Richardson limit assuming gap ~ 1/alpha
    std::vector<double> gap_ratios;                 // observed successive gap ratios
    bool richardson_valid = true;
    std::vector<ValueSurface> surfaces;       // deterministic methods only
    std::vector<std::string> surfaces_meta;   // artifact paths, filled by the runner
};

ConvergenceReport penalization_sweep(const CoefficientSet& spec, SweepMethod method,
                                     const std::vector<double>& alphas,
                                     const SweepResources& resources);

// Report assembly from already-computed sweep members; shared by
// penalization_sweep and the experiment runner. The surface variant reads
// u0 and the mass total at (t0, x0) and leaves `surfaces` empty.
ConvergenceReport summarize_surface_sweep(const std::vector<double>& alphas,
                                          const std::vector<ValueSurface>& surfaces, double t0,
                                          double x0);
ConvergenceReport summarize_scalar_sweep(const std::vector<double>& alphas,
                                         const std::vector<double>& u0,
                                         const std::vector<double>& u0_stderr,
                                         const std::vector<double>& a_totals);

// Discrete complementarity residuals of min(-d_t u - F0, phi) over interior
// nodes, with one-sided time and central space differences.
ResidualReport viscosity_residual(const ValueSurface& surface, const CoefficientSet& spec);

struct SupersolutionRow {
    double m = 0.0;
    double min_residual = 0.0;         // -d_t u - F0 - m*phi^- (the phi^- reading)
    double min_residual_literal = 0.0; // -d_t u - F0 - m*phi (literal variant, reported only)
};
std::vector<SupersolutionRow> supersolution_family_residual(const ValueSurface& surface,
                                                            const CoefficientSet& spec,
                                                            const std::vector<double>& m_list);

struct DominanceResult {
    bool is_dominated = false;
    double max_excess = 0.0; // max over nodes of u - candidate
};
DominanceResult dominance_check(const ValueSurface& u_surface, const ValueSurface& candidate);

// Skorohod flatness diagnostic for obstacle constraints: the share of the
// increasing part accumulated on steps whose end-of-step constraint slack
// exceeds eps. (The slack is read at the following grid point; at the firing
// point itself the penalty and a positive slack are mutually exclusive.)
struct SkorohodResult {
    double off_constraint_mass = 0.0;
    double total_mass = 0.0;
    double ratio = 0.0; // 0 when total_mass == 0
};
SkorohodResult skorohod_flatness(const PenalizedBsdeSolution& sol, const CoefficientSet& spec,
                                 double eps);

} // namespace pvi
