#include "pvi/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace pvi {

namespace {

double sup_diff(const ValueSurface& a, const ValueSurface& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

struct InteriorScan {
    // Calls fn(t, x, u, du_central, pde_residual, constraint_value, excluded)
    // row by row. Excluded from norms (still reported): the terminal layer,
    // where a kinked terminal condition dominates the one-sided time
    // difference; spatial jumps above 10*dx (potential discontinuities); and
    // constraint-sign interface nodes, whose central stencil straddles the
    // active/inactive regimes and carries an O(1) curvature artifact.
    template <typename Fn>
    static void run(const ValueSurface& s, const CoefficientSet& spec, Fn&& fn) {
        const int nt = s.n_times(), nx = s.n_nodes();
        if (nt < 4 || nx < 5)
            throw ShapeError("viscosity_residual: grid too coarse (need >= 3 interior nodes per axis)");
        const double dt = s.grid.dt();
        const double dx = (s.xs.back() - s.xs.front()) / (nx - 1);
        const double terminal_layer = s.grid.t_end - 0.05 * (s.grid.t_end - s.grid.t0);
        Vec xv(1), zv(1);
        std::vector<double> pde_row(nx), cval_row(nx), z_row(nx);
        std::vector<bool> jump_row(nx);
        for (int k = 0; k + 1 < nt; ++k) {
            const double t = s.grid.time(k);
            const bool near_terminal = t > terminal_layer;
            for (int j = 1; j + 1 < nx; ++j) {
                const double u = s.at(k, j);
                const double up = s.at(k, j + 1), um = s.at(k, j - 1);
                jump_row[j] = std::abs(up - u) > 10.0 * dx || std::abs(u - um) > 10.0 * dx;
                const double dtu = (s.at(k + 1, j) - u) / dt;
                const double du = (up - um) / (2.0 * dx);
                const double d2u = (up - 2.0 * u + um) / (dx * dx);
                xv[0] = s.xs[j];
                const double b = spec.drift(t, xv)[0];
                const double sg = spec.diffusion(t, xv)(0, 0);
                zv[0] = sg * du;
                const double f0 = 0.5 * sg * sg * d2u + b * du + spec.driver(t, xv, u, zv);
                pde_row[j] = -dtu - f0;
                cval_row[j] = spec.constraint(t, xv, u, zv);
                z_row[j] = zv[0];
            }
            for (int j = 1; j + 1 < nx; ++j) {
                const bool neg = cval_row[j] < 0.0;
                const bool interface_node =
                    (j > 1 && (cval_row[j - 1] < 0.0) != neg) ||
                    (j + 2 < nx && (cval_row[j + 1] < 0.0) != neg);
                xv[0] = s.xs[j];
                zv[0] = z_row[j];
                fn(t, xv, s.at(k, j), zv, pde_row[j], cval_row[j],
                   near_terminal || jump_row[j] || interface_node);
            }
        }
    }
};

} // namespace

namespace {

void check_alphas(const std::vector<double>& alphas) {
    if (alphas.size() < 4)
        throw ConfigError("penalization_sweep: need at least 4 alphas");
    for (std::size_t i = 1; i < alphas.size(); ++i)
        if (!(alphas[i] > alphas[i - 1]))
            throw ConfigError("penalization_sweep: alphas must be strictly increasing");
}

// Richardson limit assuming gap ~ 1/alpha, validated by the gap ratios.
void fill_richardson(ConvergenceReport& rep) {
    const std::size_t n = rep.alphas.size();
    std::vector<double> gaps(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
        gaps[i] = rep.u0[i + 1] - rep.u0[i];
    const double scale = std::max(1.0, std::abs(rep.u0.back()));
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
        if (std::abs(gaps[i + 1]) > 1e-12 * scale) {
            const double observed = gaps[i] / gaps[i + 1];
            rep.gap_ratios.push_back(observed);
            const double expected = (1.0 / rep.alphas[i] - 1.0 / rep.alphas[i + 1]) /
                                    (1.0 / rep.alphas[i + 1] - 1.0 / rep.alphas[i + 2]);
            if (std::abs(observed / expected - 1.0) > 0.5)
                rep.richardson_valid = false;
        } else {
            rep.gap_ratios.push_back(0.0);
        }
    }
    const double glast = gaps.back();
    if (std::abs(glast) > 1e-12 * scale)
        rep.limit_estimate = rep.u0.back() +
                             glast * rep.alphas[n - 2] / (rep.alphas[n - 1] - rep.alphas[n - 2]);
    else
        rep.limit_estimate = rep.u0.back();
}

} // namespace

ConvergenceReport summarize_surface_sweep(const std::vector<double>& alphas,
                                          const std::vector<ValueSurface>& surfaces, double t0,
                                          double x0) {
    check_alphas(alphas);
    if (surfaces.size() != alphas.size())
        throw ShapeError("summarize_surface_sweep: one surface per alpha required");
    ConvergenceReport rep;
    rep.alphas = alphas;
    for (const auto& s : surfaces) {
        rep.u0.push_back(s.eval(t0, x0));
        rep.u0_stderr.push_back(0.0);
        rep.a_totals.push_back(s.mass ? s.eval_mass(t0, x0) : 0.0);
    }
    for (std::size_t i = 0; i + 1 < alphas.size(); ++i) {
        ConvergenceReport::PairStats ps;
        const auto& lo = surfaces[i];
        const auto& hi = surfaces[i + 1];
        if (lo.values.size() != hi.values.size())
            throw ShapeError("summarize_surface_sweep: surfaces must share the grid");
        for (std::size_t v = 0; v < lo.values.size(); ++v) {
            const double dec = lo.values[v] - hi.values[v];
            if (dec > 1e-10) {
                ++ps.count;
                ps.max_decrease = std::max(ps.max_decrease, dec);
            }
        }
        rep.monotonicity_violations.push_back(ps);
        rep.cauchy_deltas.push_back(sup_diff(lo, hi));
    }
    fill_richardson(rep);
    return rep;
}

ConvergenceReport summarize_scalar_sweep(const std::vector<double>& alphas,
                                         const std::vector<double>& u0,
                                         const std::vector<double>& u0_stderr,
                                         const std::vector<double>& a_totals) {
    check_alphas(alphas);
    if (u0.size() != alphas.size() || u0_stderr.size() != alphas.size() ||
        a_totals.size() != alphas.size())
        throw ShapeError("summarize_scalar_sweep: per-alpha vectors must align");
    ConvergenceReport rep;
    rep.alphas = alphas;
    rep.u0 = u0;
    rep.u0_stderr = u0_stderr;
    rep.a_totals = a_totals;
    for (std::size_t i = 0; i + 1 < alphas.size(); ++i) {
        ConvergenceReport::PairStats ps;
        const double tol = 3.0 * std::sqrt(u0_stderr[i] * u0_stderr[i] +
                                           u0_stderr[i + 1] * u0_stderr[i + 1]);
        const double dec = u0[i] - u0[i + 1];
        if (dec > tol) {
            ps.count = 1;
            ps.max_decrease = dec;
        }
        rep.monotonicity_violations.push_back(ps);
        rep.cauchy_deltas.push_back(std::abs(u0[i + 1] - u0[i]));
    }
    fill_richardson(rep);
    return rep;
}

ConvergenceReport penalization_sweep(const CoefficientSet& spec, SweepMethod method,
                                     const std::vector<double>& alphas,
                                     const SweepResources& res) {
    check_alphas(alphas);
    const double t0 = res.grid.t0;

    if (method == SweepMethod::Lsmc) {
        Vec x0v = Vec::Constant(spec.dim, res.x0);
        const PathEnsemble ensemble =
            simulate_paths(spec, t0, x0v, res.grid, res.n_paths, res.seed);
        std::vector<double> u0, se, at;
        for (double a : alphas) {
            try {
                const PenalizedBsdeSolution sol =
                    solve_penalized_lsmc(ensemble, spec, a, res.basis, res.picard_iters);
                u0.push_back(sol.y0);
                se.push_back(sol.y0_stderr);
                at.push_back(increasing_part_stats(sol).mean_total);
            } catch (const Error& err) {
                std::ostringstream os;
                os << "penalization_sweep[alpha=" << a << "]: " << err.what();
                throw Error(os.str());
            }
        }
        return summarize_scalar_sweep(alphas, u0, se, at);
    }

    std::optional<ChainDiscretization> chain;
    if (method == SweepMethod::Chain)
        chain = build_chain(spec, res.grid, res.x_min, res.x_max, res.n_space);
    std::vector<ValueSurface> surfaces;
    for (double a : alphas) {
        try {
            surfaces.push_back(method == SweepMethod::Chain
                                   ? solve_penalized_chain(spec, *chain, a)
                                   : solve_penalized_fd(spec, res.scheme, res.grid, a));
        } catch (const Error& err) {
            std::ostringstream os;
            os << "penalization_sweep[alpha=" << a << "]: " << err.what();
            throw Error(os.str());
        }
    }
    ConvergenceReport rep = summarize_surface_sweep(alphas, surfaces, t0, res.x0);
    rep.surfaces = std::move(surfaces);
    return rep;
}

ResidualReport viscosity_residual(const ValueSurface& surface, const CoefficientSet& spec) {
    spec.check();
    ResidualReport rep;
    rep.interior_times = surface.n_times() - 1;
    rep.interior_nodes = surface.n_nodes() - 2;
    rep.pde_residual.reserve(static_cast<std::size_t>(rep.interior_times) * rep.interior_nodes);
    rep.constraint_value.reserve(rep.pde_residual.capacity());
    bool first = true;
    InteriorScan::run(surface, spec,
                      [&](double, VecRef, double, VecRef, double pde_res, double cval,
                          bool excluded) {
        rep.pde_residual.push_back(pde_res);
        rep.constraint_value.push_back(cval);
        if (excluded) {
            ++rep.excluded_nodes;
            return;
        }
        const double mn = std::min(pde_res, cval);
        rep.sup_residual = std::max(rep.sup_residual, std::abs(mn));
        rep.l1_residual += std::abs(mn);
        if (first) {
            rep.min_pde_residual = pde_res;
            rep.min_constraint = cval;
            rep.max_min_map = mn;
            first = false;
        } else {
            rep.min_pde_residual = std::min(rep.min_pde_residual, pde_res);
            rep.min_constraint = std::min(rep.min_constraint, cval);
            rep.max_min_map = std::max(rep.max_min_map, mn);
        }
        if (pde_res <= cval)
            ++rep.nodes_pde_active;
        else
            ++rep.nodes_phi_active;
    });
    return rep;
}

std::vector<SupersolutionRow> supersolution_family_residual(const ValueSurface& surface,
                                                            const CoefficientSet& spec,
                                                            const std::vector<double>& m_list) {
    spec.check();
    std::vector<SupersolutionRow> rows;
    for (double m : m_list) {
        SupersolutionRow row;
        row.m = m;
        bool first = true;
        InteriorScan::run(surface, spec,
                          [&](double t, VecRef xv, double u, VecRef zv, double pde_res,
                              double cval, bool excluded) {
            if (excluded)
                return;
            (void)t;
            (void)xv;
            (void)u;
            (void)zv;
            const double r = pde_res - m * std::max(-cval, 0.0);
            const double rl = pde_res - m * cval;
            if (first) {
                row.min_residual = r;
                row.min_residual_literal = rl;
                first = false;
            } else {
                row.min_residual = std::min(row.min_residual, r);
                row.min_residual_literal = std::min(row.min_residual_literal, rl);
            }
        });
        rows.push_back(row);
    }
    return rows;
}

DominanceResult dominance_check(const ValueSurface& u_surface, const ValueSurface& candidate) {
    if (u_surface.xs.size() != candidate.xs.size() ||
        u_surface.n_times() != candidate.n_times())
        throw ShapeError("dominance_check: grid mismatch");
    for (std::size_t j = 0; j < u_surface.xs.size(); ++j)
        if (std::abs(u_surface.xs[j] - candidate.xs[j]) > 1e-12)
            throw ShapeError("dominance_check: grid mismatch");
    DominanceResult res;
    res.max_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < u_surface.values.size(); ++i)
        res.max_excess = std::max(res.max_excess, u_surface.values[i] - candidate.values[i]);
    res.is_dominated = res.max_excess <= 1e-10;
    return res;
}

SkorohodResult skorohod_flatness(const PenalizedBsdeSolution& sol, const CoefficientSet& spec,
                                 double eps) {
    spec.check();
    if (!(eps > 0.0))
        throw ConfigError("skorohod_flatness: eps must be > 0");
    if (!spec.has_obstacle())
        throw ShapeError(
            "skorohod_flatness: diagnostic applies only to obstacle constraints y - h(t,x)");

    const int n = sol.grid.n_steps;
    const int d = sol.dim;
    SkorohodResult out;
    Vec xv(d), zv(d);
    // Requires the originating ensemble geometry through the solution arrays
    // only: the slack is evaluated along (X, Y, Z) at the step endpoint.
    if (sol.x_states.empty())
        throw ShapeError("skorohod_flatness: solution does not carry path states");
    for (int p = 0; p < sol.n_paths; ++p) {
        for (int k = 0; k < n; ++k) {
            const double da = sol.a_at(p, k + 1) - sol.a_at(p, k);
            if (da <= 0.0)
                continue;
            out.total_mass += da;
            const int ke = k + 1;
            for (int c = 0; c < d; ++c) {
                xv[c] = sol.x_states[(static_cast<std::size_t>(p) * (n + 1) + ke) * d + c];
                zv[c] = sol.z_at(p, std::min(ke, n - 1), c);
            }
            const double slack =
                spec.constraint(sol.grid.time(ke), xv, sol.y_at(p, ke), zv);
            if (slack > eps)
                out.off_constraint_mass += da;
        }
    }
    out.total_mass /= sol.n_paths;
    out.off_constraint_mass /= sol.n_paths;
    out.ratio = out.total_mass > 0.0 ? out.off_constraint_mass / out.total_mass : 0.0;
    return out;
}

} // namespace pvi
