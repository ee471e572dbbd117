#include "pvi/pde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pvi {

namespace {

double phi_neg(const CoefficientSet& spec, double t, VecRef x, double y, VecRef z) {
    return std::max(-spec.constraint(t, x, y, z), 0.0);
}

// Thomas sweep for the tridiagonal system (in place, rhs becomes solution).
void tridiag_solve(std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up,
                   std::vector<double>& rhs) {
    const std::size_t n = di.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lo[i] / di[i - 1];
        di[i] -= m * up[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= di[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] = (rhs[i] - up[i] * rhs[i + 1]) / di[i];
}

struct Rows {
    std::vector<double> lo, di, up; // generator L rows: (L u)_j = lo*u_{j-1} + di*u_j + up*u_{j+1}
    std::vector<double> sig;        // sigma(t, x_j), reused for z
    double max_sig2 = 0.0;
};

// Generator rows at time t. Central differences with upwinded drift when
// |b|*dx > sigma^2; boundary rows carry the drift only when it points into
// the domain (free outflow otherwise), so every row sums to zero and the
// implicit matrix is an M-matrix.
Rows build_rows(const CoefficientSet& spec, const FdScheme& sc, double t,
                const std::vector<double>& xs) {
    const int nn = static_cast<int>(xs.size());
    const double dx = (sc.x_max - sc.x_min) / sc.n_space;
    Rows r;
    r.lo.assign(nn, 0.0);
    r.di.assign(nn, 0.0);
    r.up.assign(nn, 0.0);
    r.sig.assign(nn, 0.0);
    Vec xv(1);
    for (int j = 0; j < nn; ++j) {
        xv[0] = xs[j];
        const double b = spec.drift(t, xv)[0];
        const double sg = spec.diffusion(t, xv)(0, 0);
        if (!std::isfinite(b) || !std::isfinite(sg))
            throw EvaluationError("solve_penalized_fd: non-finite coefficient");
        r.sig[j] = sg;
        r.max_sig2 = std::max(r.max_sig2, sg * sg);
        if (j == 0) {
            r.up[j] = std::max(b, 0.0) / dx;
            r.di[j] = -r.up[j];
        } else if (j == nn - 1) {
            r.lo[j] = std::max(-b, 0.0) / dx;
            r.di[j] = -r.lo[j];
        } else {
            const double d = 0.5 * sg * sg / (dx * dx);
            const double cc = b / (2.0 * dx);
            if (d >= std::abs(cc)) {
                r.lo[j] = d - cc;
                r.up[j] = d + cc;
            } else if (b > 0.0) {
                r.lo[j] = d;
                r.up[j] = d + b / dx;
            } else {
                r.lo[j] = d - b / dx;
                r.up[j] = d;
            }
            r.di[j] = -(r.lo[j] + r.up[j]);
        }
    }
    return r;
}

void apply_rows(const Rows& r, const std::vector<double>& u, std::vector<double>& out) {
    const int nn = static_cast<int>(u.size());
    for (int j = 0; j < nn; ++j) {
        double v = r.di[j] * u[j];
        if (j > 0)
            v += r.lo[j] * u[j - 1];
        if (j < nn - 1)
            v += r.up[j] * u[j + 1];
        out[j] = v;
    }
}

// sigma^T * D_x u at every node (central interior, one-sided boundary).
void z_values(const Rows& r, const std::vector<double>& u, double dx, std::vector<double>& z) {
    const int nn = static_cast<int>(u.size());
    z.resize(nn);
    for (int j = 0; j < nn; ++j) {
        double du;
        if (j == 0)
            du = (u[1] - u[0]) / dx;
        else if (j == nn - 1)
            du = (u[nn - 1] - u[nn - 2]) / dx;
        else
            du = (u[j + 1] - u[j - 1]) / (2.0 * dx);
        z[j] = r.sig[j] * du;
    }
}

struct Stepper {
    const CoefficientSet& spec;
    const FdScheme& sc;
    const TimeGrid& grid;
    double alpha;
    std::vector<double> xs;
    std::vector<double> psi_b; // pinned Dirichlet values (terminal extension)
    double dx;

    std::vector<double> u, mass, w, zlag, lo, di, up, rhs;

    Stepper(const CoefficientSet& spec_, const FdScheme& sc_, const TimeGrid& grid_,
            double alpha_)
        : spec(spec_), sc(sc_), grid(grid_), alpha(alpha_) {
        spec.check();
        if (spec.dim != 1)
            throw ShapeError("solve_penalized_fd: requires spec.dim == 1");
        if (sc.theta < 0.0 || sc.theta > 1.0)
            throw ConfigError("FdScheme: theta must be in [0,1]");
        if (!(sc.x_min < sc.x_max) || sc.n_space < 4)
            throw ConfigError("FdScheme: need x_min < x_max and n_space >= 4");
        if (alpha < 0.0)
            throw ConfigError("solve_penalized_fd: alpha must be >= 0");
        const int nn = sc.n_space + 1;
        dx = (sc.x_max - sc.x_min) / sc.n_space;
        xs.resize(nn);
        for (int j = 0; j < nn; ++j)
            xs[j] = sc.x_min + j * dx;
        Vec xv(1);
        u.resize(nn);
        for (int j = 0; j < nn; ++j) {
            xv[0] = xs[j];
            u[j] = spec.terminal(xv);
        }
        psi_b = {u.front(), u.back()};
        mass.assign(nn, 0.0);
    }

    // One backward step t_{k+1} -> t_k; leaves the new level in `u`, adds the
    // step's constraint mass into the transported `mass`.
    void step(int k) {
        const int nn = static_cast<int>(xs.size());
        const double dt = grid.dt();
        const double t_new = grid.time(k);
        const double t_old = grid.time(k + 1);
        const Rows rows_old = build_rows(spec, sc, t_old, xs);
        const Rows rows_new = build_rows(spec, sc, t_new, xs);

        if (sc.theta == 0.0 && dt > dx * dx / std::max(rows_old.max_sig2, 1e-300) + 1e-15) {
            std::ostringstream os;
            os << "solve_penalized_fd: explicit scheme violates dt <= dx^2/max(sigma^2) (dt="
               << dt << ", bound=" << dx * dx / rows_old.max_sig2 << ")";
            throw DiscretizationError(os.str());
        }

        w.resize(nn);
        apply_rows(rows_old, u, w);
        for (int j = 0; j < nn; ++j)
            w[j] = u[j] + (1.0 - sc.theta) * dt * w[j];
        z_values(rows_old, u, dx, zlag);

        Vec xv(1), zv(1);
        std::vector<double> dmass(nn, 0.0);
        if (sc.penalty == FdScheme::Penalty::ExplicitLagged) {
            for (int j = 0; j < nn; ++j) {
                xv[0] = xs[j];
                zv[0] = zlag[j];
                const double pen = alpha * phi_neg(spec, t_old, xv, u[j], zv);
                w[j] += dt * (spec.driver(t_old, xv, u[j], zv) + pen);
                dmass[j] = dt * pen;
            }
        }

        auto implicit_solve = [&](std::vector<double>& rhs_vec) {
            lo.assign(nn, 0.0);
            di.assign(nn, 1.0);
            up.assign(nn, 0.0);
            for (int j = 0; j < nn; ++j) {
                lo[j] = -sc.theta * dt * rows_new.lo[j];
                di[j] = 1.0 - sc.theta * dt * rows_new.di[j];
                up[j] = -sc.theta * dt * rows_new.up[j];
            }
            if (sc.boundary == FdScheme::Boundary::DirichletTerminalExtension) {
                lo[0] = up[0] = 0.0;
                di[0] = 1.0;
                lo[nn - 1] = up[nn - 1] = 0.0;
                di[nn - 1] = 1.0;
            }
            tridiag_solve(lo, di, up, rhs_vec);
        };

        if (sc.boundary == FdScheme::Boundary::DirichletTerminalExtension) {
            w[0] = psi_b[0];
            w[nn - 1] = psi_b[1];
        }
        implicit_solve(w);

        if (sc.penalty == FdScheme::Penalty::SemiImplicit) {
            // Per-node damped fixed point on the driver's y-argument. The
            // driver-only equation is solved first with alpha-independent
            // damping; if the penalty is exactly zero at that root, it also
            // solves the penalized equation, so inactive constraints give
            // bitwise alpha-independent values.
            const double omega0 = 1.0 / (1.0 + dt * spec.lip_g);
            const double omega = 1.0 / (1.0 + dt * (spec.lip_g + alpha * spec.lip_phi));
            auto damped_solve = [&](double c0, double om, bool with_penalty) {
                double y = c0;
                for (int it = 0;; ++it) {
                    const double pen =
                        with_penalty ? alpha * phi_neg(spec, t_new, xv, y, zv) : 0.0;
                    const double target = c0 + dt * (spec.driver(t_new, xv, y, zv) + pen);
                    const double resid = target - y;
                    if (std::abs(resid) <= 1e-12)
                        return y;
                    if (it > 200000 || !std::isfinite(target))
                        throw DivergenceError(
                            "solve_penalized_fd: per-node fixed point did not converge");
                    y += om * resid;
                }
            };
            for (int j = 0; j < nn; ++j) {
                xv[0] = xs[j];
                zv[0] = zlag[j];
                double y = damped_solve(w[j], omega0, false);
                if (alpha * phi_neg(spec, t_new, xv, y, zv) != 0.0)
                    y = damped_solve(w[j], omega, true);
                w[j] = y;
                dmass[j] = dt * alpha * phi_neg(spec, t_new, xv, y, zv);
            }
            if (sc.boundary == FdScheme::Boundary::DirichletTerminalExtension) {
                w[0] = psi_b[0];
                w[nn - 1] = psi_b[1];
                dmass[0] = dmass[nn - 1] = 0.0;
            }
        }
        u = w;

        // Transport the accumulated constraint mass with the same theta step.
        rhs.resize(nn);
        apply_rows(rows_old, mass, rhs);
        for (int j = 0; j < nn; ++j)
            rhs[j] = mass[j] + (1.0 - sc.theta) * dt * rhs[j];
        if (sc.boundary == FdScheme::Boundary::DirichletTerminalExtension)
            rhs[0] = rhs[nn - 1] = 0.0;
        implicit_solve(rhs);
        for (int j = 0; j < nn; ++j)
            mass[j] = rhs[j] + dmass[j];
    }
};

ValueSurface run_backward(const CoefficientSet& spec, const FdScheme& sc, const TimeGrid& grid,
                          double alpha, bool project, const ObstacleFn& h) {
    Stepper st(spec, sc, grid, alpha);
    const int nn = static_cast<int>(st.xs.size());
    ValueSurface s;
    s.grid = grid;
    s.xs = st.xs;
    s.alpha = alpha;
    s.problem = spec.name;
    s.boundary = sc.boundary == FdScheme::Boundary::LinearExtrapolation
                     ? "linear-extrapolation"
                     : "dirichlet-terminal-extension";
    s.values.assign(static_cast<std::size_t>(grid.n_steps + 1) * nn, 0.0);
    s.mass.emplace(s.values.size(), 0.0);

    Vec xv(1);
    for (int j = 0; j < nn; ++j)
        s.at(grid.n_steps, j) = st.u[j];
    for (int k = grid.n_steps - 1; k >= 0; --k) {
        st.step(k);
        if (project) {
            const double t = grid.time(k);
            for (int j = 0; j < nn; ++j) {
                xv[0] = st.xs[j];
                const double hj = h(t, xv);
                if (st.u[j] < hj) {
                    st.mass[j] += hj - st.u[j];
                    st.u[j] = hj;
                }
            }
        }
        for (int j = 0; j < nn; ++j) {
            s.at(k, j) = st.u[j];
            (*s.mass)[static_cast<std::size_t>(k) * nn + j] = st.mass[j];
        }
    }
    s.check_finite();
    return s;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

} // namespace

ValueSurface solve_penalized_fd(const CoefficientSet& spec, const FdScheme& scheme,
                                const TimeGrid& grid, double alpha) {
    return run_backward(spec, scheme, grid, alpha, false, ObstacleFn());
}

ValueSurface solve_projected_obstacle_fd(const CoefficientSet& spec, const FdScheme& scheme,
                                         const TimeGrid& grid) {
    if (!spec.has_obstacle())
        throw ShapeError(
            "solve_projected_obstacle_fd: constraint is not of the obstacle form y - h(t,x)");
    return run_backward(spec, scheme, grid, 0.0, true, spec.obstacle);
}

double closed_form_linear(double rate, double vol, double strike, double x0, double T,
                          LinearPayoff payoff) {
    if (!(vol > 0.0) || !(T > 0.0))
        throw ConfigError("closed_form_linear: need vol > 0 and T > 0");
    if (payoff == LinearPayoff::One)
        return std::exp(-rate * T);
    const double sq = vol * std::sqrt(T);
    const double d1 = (std::log(x0 / strike) + (rate + 0.5 * vol * vol) * T) / sq;
    const double d2 = d1 - sq;
    return strike * std::exp(-rate * T) * norm_cdf(-d2) - x0 * norm_cdf(-d1);
}

double lognormal_quadrature(double rate, double vol, double strike, double x0, double T,
                            LinearPayoff payoff, double tol) {
    if (!(vol > 0.0) || !(T > 0.0))
        throw ConfigError("lognormal_quadrature: need vol > 0 and T > 0");
    const double m = std::log(x0) + (rate - 0.5 * vol * vol) * T;
    const double s = vol * std::sqrt(T);
    auto pay = [&](double u) {
        const double xT = std::exp(m + s * u);
        return payoff == LinearPayoff::Put ? std::max(strike - xT, 0.0) : 1.0;
    };
    auto integrand = [&](double u) {
        return pay(u) * std::exp(-0.5 * u * u) / 2.5066282746310005024;
    };
    // Split at the payoff kink so each piece is smooth.
    const double kink = (std::log(strike) - m) / s;
    const double a = -14.0, b = 14.0;
    double total = 0.0;
    if (kink > a && kink < b) {
        total = integrate(integrand, a, kink, tol / 2.0) +
                integrate(integrand, kink, b, tol / 2.0);
    } else {
        total = integrate(integrand, a, b, tol);
    }
    return std::exp(-rate * T) * total;
}

std::vector<RefineRow> refine_study(const CoefficientSet& spec, const FdScheme& scheme,
                                    double alpha,
                                    const std::vector<std::pair<int, int>>& levels, double x0,
                                    std::optional<double> oracle_u0) {
    if (levels.size() < 3)
        throw ConfigError("refine_study: need at least 3 levels");
    // Explicit stepping must refine time 4x per space doubling (CFL);
    // implicit schemes may use 2x or the dx^2-matched 4x.
    for (std::size_t i = 1; i < levels.size(); ++i) {
        const int tf = levels[i - 1].second > 0 ? levels[i].second / levels[i - 1].second : 0;
        const bool tf_ok = scheme.theta == 0.0 ? tf == 4 : (tf == 2 || tf == 4);
        if (levels[i].first != 2 * levels[i - 1].first || !tf_ok ||
            levels[i].second != tf * levels[i - 1].second)
            throw ConfigError("refine_study: each level must refine 2x in space and " +
                              std::string(scheme.theta == 0.0 ? "4x" : "2x or 4x") +
                              " in time");
    }

    std::vector<RefineRow> rows;
    std::vector<double> errs;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        FdScheme sc = scheme;
        sc.n_space = levels[i].first;
        const TimeGrid grid(0.0, spec.horizon, levels[i].second);
        const ValueSurface s = solve_penalized_fd(spec, sc, grid, alpha);
        RefineRow row;
        row.level = static_cast<int>(i);
        row.n_space = levels[i].first;
        row.n_steps = levels[i].second;
        row.u0 = s.eval(0.0, x0);
        if (i > 0)
            row.delta_prev = row.u0 - rows.back().u0;
        // Orders are measured in dt (log of the error ratio over the log of
        // the step ratio), so dx^2-matched refinements report the time order.
        const double lr =
            i > 0 ? std::log(static_cast<double>(levels[i].second) / levels[i - 1].second)
                  : 1.0;
        if (oracle_u0) {
            errs.push_back(std::abs(row.u0 - *oracle_u0));
            if (i > 0 && errs[i] > 0.0 && errs[i - 1] > 0.0)
                row.empirical_order = std::log(errs[i - 1] / errs[i]) / lr;
        } else if (i > 1 && row.delta_prev && *rows.back().delta_prev != 0.0 &&
                   *row.delta_prev != 0.0) {
            row.empirical_order =
                std::log(std::abs(*rows.back().delta_prev) / std::abs(*row.delta_prev)) / lr;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace pvi
