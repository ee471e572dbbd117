// Python bindings for the core operations.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pvi/experiment.hpp"

namespace py = pybind11;
using namespace pvi;

namespace {

py::array_t<double> as_array(const std::vector<double>& data, std::vector<py::ssize_t> shape) {
    py::array_t<double> out(shape);
    std::memcpy(out.mutable_data(), data.data(), data.size() * sizeof(double));
    return out;
}

RegressionBasis::Family basis_family(const std::string& name) {
    if (name == "polynomial")
        return RegressionBasis::Family::Polynomial;
    if (name == "piecewise-linear")
        return RegressionBasis::Family::PiecewiseLinear;
    throw ConfigError("basis family must be 'polynomial' or 'piecewise-linear'");
}

SweepMethod sweep_method(const std::string& name) {
    if (name == "lsmc")
        return SweepMethod::Lsmc;
    if (name == "chain")
        return SweepMethod::Chain;
    if (name == "fd")
        return SweepMethod::Fd;
    throw ConfigError("sweep method must be 'lsmc', 'chain' or 'fd'");
}

py::dict report_to_dict(const ConvergenceReport& rep) {
    py::dict d;
    d["alphas"] = rep.alphas;
    d["u0"] = rep.u0;
    d["u0_stderr"] = rep.u0_stderr;
    d["cauchy_deltas"] = rep.cauchy_deltas;
    py::list viols;
    for (const auto& v : rep.monotonicity_violations) {
        py::dict o;
        o["count"] = v.count;
        o["max_decrease"] = v.max_decrease;
        viols.append(o);
    }
    d["monotonicity_violations"] = viols;
    d["a_totals"] = rep.a_totals;
    d["limit_estimate"] = rep.limit_estimate;
    d["gap_ratios"] = rep.gap_ratios;
    d["richardson_valid"] = rep.richardson_valid;
    py::list surfaces;
    for (const auto& s : rep.surfaces)
        surfaces.append(s);
    d["surfaces"] = surfaces;
    return d;
}

} // namespace

PYBIND11_MODULE(_pvi, m) {
    m.doc() = "Penalized constrained-BSDE / variational inequality laboratory";

    py::register_exception<Error>(m, "PviError");

    // --- problem -------------------------------------------------------
    py::class_<CoefficientSet>(m, "CoefficientSet")
        .def(py::init([](int dim, double horizon, DriftFn drift, DiffusionFn diffusion,
                         DriverFn driver, ConstraintFn constraint, TerminalFn terminal,
                         double lip_bx, double lip_g, double lip_phi, int growth_p,
                         ObstacleFn obstacle, double x0_hint) {
                 CoefficientSet s;
                 s.dim = dim;
                 s.horizon = horizon;
                 s.drift = std::move(drift);
                 s.diffusion = std::move(diffusion);
                 s.driver = std::move(driver);
                 s.constraint = std::move(constraint);
                 s.terminal = std::move(terminal);
                 s.lip_bx = lip_bx;
                 s.lip_g = lip_g;
                 s.lip_phi = lip_phi;
                 s.growth_p = growth_p;
                 s.obstacle = std::move(obstacle);
                 s.x0_hint = x0_hint;
                 s.check();
                 return s;
             }),
             py::arg("dim"), py::arg("horizon"), py::arg("drift"), py::arg("diffusion"),
             py::arg("driver"), py::arg("constraint"), py::arg("terminal"),
             py::arg("lip_bx") = 0.0, py::arg("lip_g") = 0.0, py::arg("lip_phi") = 0.0,
             py::arg("growth_p") = 0, py::arg("obstacle") = ObstacleFn(),
             py::arg("x0_hint") = 0.0)
        .def_readonly("dim", &CoefficientSet::dim)
        .def_readonly("horizon", &CoefficientSet::horizon)
        .def_readonly("name", &CoefficientSet::name)
        .def_readonly("x0_hint", &CoefficientSet::x0_hint)
        .def_property_readonly("has_obstacle", &CoefficientSet::has_obstacle)
        .def("drift_at", [](const CoefficientSet& s, double t, VecRef x) { return s.drift(t, x); })
        .def("diffusion_at",
             [](const CoefficientSet& s, double t, VecRef x) { return s.diffusion(t, x); })
        .def("driver_at", [](const CoefficientSet& s, double t, VecRef x, double y,
                             VecRef z) { return s.driver(t, x, y, z); })
        .def("constraint_at", [](const CoefficientSet& s, double t, VecRef x, double y,
                                 VecRef z) { return s.constraint(t, x, y, z); })
        .def("terminal_at", [](const CoefficientSet& s, VecRef x) { return s.terminal(x); });

    m.def("builtin_problem", &builtin_problem, py::arg("name"), py::arg("params"));

    m.def(
        "validate_problem",
        [](const CoefficientSet& spec, int n_samples, double box_radius, std::uint64_t seed) {
            const ValidationReport rep = validate_problem(spec, n_samples, box_radius, seed);
            py::dict d;
            d["lipschitz_estimates"] = rep.lipschitz_estimates;
            d["growth_estimates"] = rep.growth_estimates;
            py::list viols;
            for (const auto& v : rep.violations) {
                py::dict o;
                o["coefficient"] = v.coefficient;
                o["sample_a"] = v.sample_a;
                o["sample_b"] = v.sample_b;
                o["observed_slope"] = v.observed_slope;
                viols.append(o);
            }
            d["violations"] = viols;
            return d;
        },
        py::arg("spec"), py::arg("n_samples"), py::arg("box_radius"), py::arg("seed"));

    // --- sde -------------------------------------------------------------
    py::class_<TimeGrid>(m, "TimeGrid")
        .def(py::init<double, double, int>(), py::arg("t0"), py::arg("t_end"),
             py::arg("n_steps"))
        .def_readonly("t0", &TimeGrid::t0)
        .def_readonly("t_end", &TimeGrid::t_end)
        .def_readonly("n_steps", &TimeGrid::n_steps)
        .def("dt", &TimeGrid::dt)
        .def("time", &TimeGrid::time);

    py::class_<PathEnsemble>(m, "PathEnsemble")
        .def_readonly("dim", &PathEnsemble::dim)
        .def_readonly("n_paths", &PathEnsemble::n_paths)
        .def_readonly("seed", &PathEnsemble::seed)
        .def_readonly("grid", &PathEnsemble::grid)
        .def_property_readonly("states",
                               [](const PathEnsemble& e) {
                                   return as_array(e.states, {e.n_paths, e.grid.n_steps + 1,
                                                              e.dim});
                               })
        .def_property_readonly("increments", [](const PathEnsemble& e) {
            return as_array(e.increments, {e.n_paths, e.grid.n_steps, e.dim});
        });

    m.def("simulate_paths", &simulate_paths, py::arg("spec"), py::arg("t0"), py::arg("x0"),
          py::arg("grid"), py::arg("n_paths"), py::arg("seed"),
          py::call_guard<py::gil_scoped_release>());
    m.def("save_ensemble", &save_ensemble, py::arg("path"), py::arg("ensemble"));
    m.def("load_ensemble", &load_ensemble, py::arg("path"), py::arg("t0"), py::arg("t_end"));

    py::class_<ChainDiscretization>(m, "ChainDiscretization")
        .def_readonly("x_min", &ChainDiscretization::x_min)
        .def_readonly("x_max", &ChainDiscretization::x_max)
        .def_readonly("n_space", &ChainDiscretization::n_space)
        .def_readonly("dx", &ChainDiscretization::dx)
        .def_readonly("frozen_boundary_nodes", &ChainDiscretization::frozen_boundary_nodes)
        .def_readonly("grid", &ChainDiscretization::grid);

    m.def("build_chain", &build_chain, py::arg("spec"), py::arg("grid"), py::arg("x_min"),
          py::arg("x_max"), py::arg("n_space"), py::call_guard<py::gil_scoped_release>());

    // --- bsde ------------------------------------------------------------
    py::class_<RegressionBasis>(m, "RegressionBasis")
        .def(py::init([](const std::string& family, int degree, int n_knots,
                         double quantile_lo, double quantile_hi, bool terminal_shift) {
                 RegressionBasis b;
                 b.family = basis_family(family);
                 b.degree = degree;
                 b.n_knots = n_knots;
                 b.quantile_lo = quantile_lo;
                 b.quantile_hi = quantile_hi;
                 b.terminal_shift = terminal_shift;
                 return b;
             }),
             py::arg("family") = "polynomial", py::arg("degree") = 4, py::arg("n_knots") = 8,
             py::arg("quantile_lo") = 0.001, py::arg("quantile_hi") = 0.999,
             py::arg("terminal_shift") = true)
        .def_readonly("degree", &RegressionBasis::degree)
        .def_readonly("n_knots", &RegressionBasis::n_knots);

    py::class_<PenalizedBsdeSolution>(m, "PenalizedBsdeSolution")
        .def_readonly("alpha", &PenalizedBsdeSolution::alpha)
        .def_readonly("n_paths", &PenalizedBsdeSolution::n_paths)
        .def_readonly("dim", &PenalizedBsdeSolution::dim)
        .def_readonly("y0", &PenalizedBsdeSolution::y0)
        .def_readonly("y0_stderr", &PenalizedBsdeSolution::y0_stderr)
        .def_readonly("grid", &PenalizedBsdeSolution::grid)
        .def_property_readonly("y",
                               [](const PenalizedBsdeSolution& s) {
                                   return as_array(s.y, {s.n_paths, s.grid.n_steps + 1});
                               })
        .def_property_readonly("z",
                               [](const PenalizedBsdeSolution& s) {
                                   return as_array(s.z,
                                                   {s.n_paths, s.grid.n_steps, s.dim});
                               })
        .def_property_readonly("a", [](const PenalizedBsdeSolution& s) {
            return as_array(s.a, {s.n_paths, s.grid.n_steps + 1});
        });

    m.def(
        "solve_penalized_lsmc",
        [](const PathEnsemble& e, const CoefficientSet& spec, double alpha,
           const RegressionBasis& basis, int picard_iters, bool literal_increasing_part) {
            LsmcOptions o;
            o.picard_iters = picard_iters;
            o.literal_increasing_part = literal_increasing_part;
            return solve_penalized_lsmc(e, spec, alpha, basis, o);
        },
        py::arg("ensemble"), py::arg("spec"), py::arg("alpha"),
        py::arg("basis") = RegressionBasis{}, py::arg("picard_iters") = 2,
        py::arg("literal_increasing_part") = false,
        py::call_guard<py::gil_scoped_release>());

    m.def("solve_penalized_chain", &solve_penalized_chain, py::arg("spec"), py::arg("chain"),
          py::arg("alpha"), py::call_guard<py::gil_scoped_release>());

    m.def("increasing_part_stats", [](const PenalizedBsdeSolution& sol) {
        const IncreasingPartStats st = increasing_part_stats(sol);
        py::dict d;
        d["mean_total"] = st.mean_total;
        d["max_total"] = st.max_total;
        d["fraction_active"] = st.fraction_active;
        return d;
    });

    // --- surfaces / pde ---------------------------------------------------
    py::class_<ValueSurface>(m, "ValueSurface")
        .def_readonly("alpha", &ValueSurface::alpha)
        .def_readonly("problem", &ValueSurface::problem)
        .def_readonly("boundary", &ValueSurface::boundary)
        .def_readonly("grid", &ValueSurface::grid)
        .def_property_readonly("xs", [](const ValueSurface& s) { return s.xs; })
        .def_property_readonly("values",
                               [](const ValueSurface& s) {
                                   return as_array(s.values,
                                                   {s.n_times(), s.n_nodes()});
                               })
        .def("eval", &ValueSurface::eval, py::arg("t"), py::arg("x"))
        .def("eval_mass", &ValueSurface::eval_mass, py::arg("t"), py::arg("x"));

    m.def("write_surface_csv", &write_surface_csv, py::arg("path"), py::arg("surface"));
    m.def("read_surface_csv", &read_surface_csv, py::arg("path"));

    py::class_<FdScheme>(m, "FdScheme")
        .def(py::init([](double theta, const std::string& penalty, double x_min, double x_max,
                         int n_space, const std::string& boundary) {
                 FdScheme sc;
                 sc.theta = theta;
                 if (penalty == "semi-implicit")
                     sc.penalty = FdScheme::Penalty::SemiImplicit;
                 else if (penalty == "explicit-lagged")
                     sc.penalty = FdScheme::Penalty::ExplicitLagged;
                 else
                     throw ConfigError("penalty must be 'semi-implicit' or 'explicit-lagged'");
                 sc.x_min = x_min;
                 sc.x_max = x_max;
                 sc.n_space = n_space;
                 if (boundary == "linear-extrapolation")
                     sc.boundary = FdScheme::Boundary::LinearExtrapolation;
                 else if (boundary == "dirichlet-terminal-extension")
                     sc.boundary = FdScheme::Boundary::DirichletTerminalExtension;
                 else
                     throw ConfigError("boundary must be 'linear-extrapolation' or "
                                       "'dirichlet-terminal-extension'");
                 return sc;
             }),
             py::arg("theta") = 1.0, py::arg("penalty") = "semi-implicit", py::arg("x_min"),
             py::arg("x_max"), py::arg("n_space"),
             py::arg("boundary") = "linear-extrapolation");

    m.def("solve_penalized_fd", &solve_penalized_fd, py::arg("spec"), py::arg("scheme"),
          py::arg("grid"), py::arg("alpha"), py::call_guard<py::gil_scoped_release>());
    m.def("solve_projected_obstacle_fd", &solve_projected_obstacle_fd, py::arg("spec"),
          py::arg("scheme"), py::arg("grid"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "closed_form_linear",
        [](double rate, double vol, double strike, double x0, double T,
           const std::string& payoff) {
            return closed_form_linear(rate, vol, strike, x0, T,
                                      payoff == "one" ? LinearPayoff::One
                                                      : LinearPayoff::Put);
        },
        py::arg("rate"), py::arg("vol"), py::arg("strike"), py::arg("x0"), py::arg("T"),
        py::arg("payoff") = "put");
    m.def(
        "lognormal_quadrature",
        [](double rate, double vol, double strike, double x0, double T,
           const std::string& payoff, double tol) {
            return lognormal_quadrature(rate, vol, strike, x0, T,
                                        payoff == "one" ? LinearPayoff::One
                                                        : LinearPayoff::Put,
                                        tol);
        },
        py::arg("rate"), py::arg("vol"), py::arg("strike"), py::arg("x0"), py::arg("T"),
        py::arg("payoff") = "put", py::arg("tol") = 1e-10);

    m.def(
        "refine_study",
        [](const CoefficientSet& spec, const FdScheme& scheme, double alpha,
           const std::vector<std::pair<int, int>>& levels, double x0,
           std::optional<double> oracle_u0) {
            py::list out;
            for (const auto& r : refine_study(spec, scheme, alpha, levels, x0, oracle_u0)) {
                py::dict d;
                d["level"] = r.level;
                d["n_space"] = r.n_space;
                d["n_steps"] = r.n_steps;
                d["u0"] = r.u0;
                d["delta_prev"] = r.delta_prev ? py::cast(*r.delta_prev) : py::none();
                d["empirical_order"] =
                    r.empirical_order ? py::cast(*r.empirical_order) : py::none();
                out.append(d);
            }
            return out;
        },
        py::arg("spec"), py::arg("scheme"), py::arg("alpha"), py::arg("levels"), py::arg("x0"),
        py::arg("oracle_u0") = std::nullopt);

    // --- analysis ---------------------------------------------------------
    py::class_<SweepResources>(m, "SweepResources")
        .def(py::init<>())
        .def_readwrite("grid", &SweepResources::grid)
        .def_readwrite("x0", &SweepResources::x0)
        .def_readwrite("x_min", &SweepResources::x_min)
        .def_readwrite("x_max", &SweepResources::x_max)
        .def_readwrite("n_space", &SweepResources::n_space)
        .def_readwrite("scheme", &SweepResources::scheme)
        .def_readwrite("n_paths", &SweepResources::n_paths)
        .def_readwrite("seed", &SweepResources::seed)
        .def_readwrite("basis", &SweepResources::basis)
        .def_readwrite("picard_iters", &SweepResources::picard_iters);

    m.def(
        "penalization_sweep",
        [](const CoefficientSet& spec, const std::string& method,
           const std::vector<double>& alphas, const SweepResources& res) {
            ConvergenceReport rep;
            {
                py::gil_scoped_release release;
                rep = penalization_sweep(spec, sweep_method(method), alphas, res);
            }
            return report_to_dict(rep);
        },
        py::arg("spec"), py::arg("method"), py::arg("alphas"), py::arg("resources"));

    m.def("viscosity_residual", [](const ValueSurface& surface, const CoefficientSet& spec) {
        const ResidualReport rr = viscosity_residual(surface, spec);
        py::dict d;
        d["sup_residual"] = rr.sup_residual;
        d["l1_residual"] = rr.l1_residual;
        d["min_pde_residual"] = rr.min_pde_residual;
        d["min_constraint"] = rr.min_constraint;
        d["max_min_map"] = rr.max_min_map;
        d["nodes_pde_active"] = rr.nodes_pde_active;
        d["nodes_phi_active"] = rr.nodes_phi_active;
        d["excluded_nodes"] = rr.excluded_nodes;
        d["pde_residual"] =
            as_array(rr.pde_residual, {rr.interior_times, rr.interior_nodes});
        d["constraint_value"] =
            as_array(rr.constraint_value, {rr.interior_times, rr.interior_nodes});
        return d;
    });

    m.def("supersolution_family_residual",
          [](const ValueSurface& surface, const CoefficientSet& spec,
             const std::vector<double>& m_list) {
              py::list out;
              for (const auto& row : supersolution_family_residual(surface, spec, m_list)) {
                  py::dict d;
                  d["m"] = row.m;
                  d["min_residual"] = row.min_residual;
                  d["min_residual_literal"] = row.min_residual_literal;
                  out.append(d);
              }
              return out;
          });

    m.def("dominance_check", [](const ValueSurface& u, const ValueSurface& candidate) {
        const DominanceResult r = dominance_check(u, candidate);
        py::dict d;
        d["is_dominated"] = r.is_dominated;
        d["max_excess"] = r.max_excess;
        return d;
    });

    m.def("skorohod_flatness",
          [](const PenalizedBsdeSolution& sol, const CoefficientSet& spec, double eps) {
              const SkorohodResult r = skorohod_flatness(sol, spec, eps);
              py::dict d;
              d["off_constraint_mass"] = r.off_constraint_mass;
              d["total_mass"] = r.total_mass;
              d["ratio"] = r.ratio;
              return d;
          });

    // --- experiment runner --------------------------------------------------
    m.def(
        "run_experiment",
        [](const std::string& config_path) {
            std::ostringstream err;
            const int rc = run_experiment(config_path, err);
            if (rc != 0)
                throw Error(err.str());
        },
        py::arg("config_path"));
    m.def(
        "emit_table",
        [](const std::string& report_path, const std::string& kind) {
            std::ostringstream out;
            emit_table(report_path, kind, out);
            return out.str();
        },
        py::arg("report_path"), py::arg("kind"));
    m.def("sha256_file_hex", &sha256_file_hex, py::arg("path"));
}
