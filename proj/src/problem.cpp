#include "pvi/problem.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace pvi {

namespace {

bool finite(double v) { return std::isfinite(v); }
bool finite(const Vec& v) { return v.allFinite(); }
bool finite(const Mat& m) { return m.allFinite(); }

std::string describe_point(double t, const Vec& x) {
    std::ostringstream os;
    os << "t=" << t << ", x=[";
    for (int i = 0; i < x.size(); ++i)
        os << (i ? "," : "") << x[i];
    os << "]";
    return os.str();
}

std::vector<double> flatten(double t, const Vec& x, double y, const Vec& z) {
    std::vector<double> out;
    out.reserve(2 + x.size() + z.size());
    out.push_back(t);
    for (int i = 0; i < x.size(); ++i)
        out.push_back(x[i]);
    out.push_back(y);
    for (int i = 0; i < z.size(); ++i)
        out.push_back(z[i]);
    return out;
}

double require(const std::map<std::string, double>& params, const std::string& key,
               const std::string& name) {
    auto it = params.find(key);
    if (it == params.end())
        throw ConfigError("builtin_problem '" + name + "': missing param key '" + key + "'");
    return it->second;
}

double defaulted(const std::map<std::string, double>& params, const std::string& key,
                 double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

void reject_unknown(const std::map<std::string, double>& params,
                    std::initializer_list<const char*> known, const std::string& name) {
    for (const auto& [key, value] : params) {
        (void)value;
        bool ok = false;
        for (const char* k : known)
            if (key == k)
                ok = true;
        if (!ok)
            throw ConfigError("builtin_problem '" + name + "': unknown param key '" + key + "'");
    }
}

// Shared lognormal dynamics: b = drift * x, sigma = vol * x (1D), driver -r*y.
void set_lognormal(CoefficientSet& s, double drift, double vol, double rate) {
    s.dim = 1;
    s.drift = [drift](double, VecRef x) { return Vec(drift * x); };
    s.diffusion = [vol](double, VecRef x) {
        Mat m(1, 1);
        m(0, 0) = vol * x[0];
        return m;
    };
    s.driver = [rate](double, VecRef, double y, VecRef) { return -rate * y; };
    s.lip_bx = std::abs(drift) + std::abs(vol);
    s.lip_g = std::abs(rate);
    s.growth_p = 1;
}

} // namespace

void CoefficientSet::check() const {
    if (dim < 1)
        throw ConfigError("CoefficientSet: dim must be >= 1");
    if (!(horizon > 0.0))
        throw ConfigError("CoefficientSet: horizon must be > 0");
    if (!drift || !diffusion || !driver || !constraint || !terminal)
        throw ConfigError("CoefficientSet: all coefficient maps must be set");
}

ValidationReport validate_problem(const CoefficientSet& spec, int n_samples,
                                  double box_radius, std::uint64_t seed) {
    spec.check();
    if (n_samples < 1)
        throw ConfigError("validate_problem: n_samples must be >= 1");
    if (!(box_radius > 0.0))
        throw ConfigError("validate_problem: box_radius must be > 0");

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-box_radius, box_radius);
    const int d = spec.dim;
    const double slack = 1e-9;

    ValidationReport rep;
    auto& lip = rep.lipschitz_estimates;
    lip["drift"] = lip["diffusion"] = lip["driver"] = lip["constraint"] = 0.0;
    rep.growth_estimates["driver"] = rep.growth_estimates["constraint"] = 0.0;

    auto draw_vec = [&] {
        Vec v(d);
        for (int i = 0; i < d; ++i)
            v[i] = u(gen);
        return v;
    };
    auto record = [&](const std::string& coeff, double slope, double declared,
                      std::vector<double> a, std::vector<double> b) {
        lip[coeff] = std::max(lip[coeff], slope);
        if (slope > declared * (1.0 + slack))
            rep.violations.push_back({coeff, std::move(a), std::move(b), slope});
    };

    const Vec zero_z = Vec::Zero(d);
    for (int s = 0; s < n_samples; ++s) {
        const double t = u(gen);
        const Vec x1 = draw_vec(), x2 = draw_vec();
        const double y1 = u(gen), y2 = u(gen);
        const Vec z1 = draw_vec(), z2 = draw_vec();

        // b, sigma: slope in x against the joint constant k.
        const Vec b1 = spec.drift(t, x1), b2 = spec.drift(t, x2);
        if (!finite(b1) || !finite(b2))
            throw EvaluationError("validate_problem: drift non-finite at " + describe_point(t, finite(b1) ? x2 : x1));
        const Mat s1 = spec.diffusion(t, x1), s2 = spec.diffusion(t, x2);
        if (!finite(s1) || !finite(s2))
            throw EvaluationError("validate_problem: diffusion non-finite at " + describe_point(t, finite(s1) ? x2 : x1));
        const double dxn = (x1 - x2).norm();
        if (dxn > 1e-12) {
            record("drift", (b1 - b2).norm() / dxn, spec.lip_bx,
                   flatten(t, x1, 0, Vec()), flatten(t, x2, 0, Vec()));
            record("diffusion", (s1 - s2).norm() / dxn, spec.lip_bx,
                   flatten(t, x1, 0, Vec()), flatten(t, x2, 0, Vec()));
        }

        // g, phi: slope in y at fixed z, then slope in z at fixed y. Either
        // slope exceeding the declared mu breaks the paper-style joint bound.
        auto probe_yz = [&](const char* coeff, const DriverFn& f, double declared) {
            const double fy1 = f(t, x1, y1, z1), fy2 = f(t, x1, y2, z1);
            if (!finite(fy1) || !finite(fy2))
                throw EvaluationError(std::string("validate_problem: ") + coeff +
                                      " non-finite at " + describe_point(t, x1));
            if (std::abs(y1 - y2) > 1e-12)
                record(coeff, std::abs(fy1 - fy2) / std::abs(y1 - y2), declared,
                       flatten(t, x1, y1, z1), flatten(t, x1, y2, z1));
            const double fz1 = f(t, x1, y1, z1), fz2 = f(t, x1, y1, z2);
            if (!finite(fz2))
                throw EvaluationError(std::string("validate_problem: ") + coeff +
                                      " non-finite at " + describe_point(t, x1));
            const double dzn = (z1 - z2).norm();
            if (dzn > 1e-12)
                record(coeff, std::abs(fz1 - fz2) / dzn, declared,
                       flatten(t, x1, y1, z1), flatten(t, x1, y1, z2));
        };
        probe_yz("driver", spec.driver, spec.lip_g);
        probe_yz("constraint", spec.constraint, spec.lip_phi);

        // Polynomial growth of g(t,x,0,0), phi(t,x,0,0); reported, not enforced.
        const double denom = 1.0 + std::pow(x1.norm(), spec.growth_p);
        const double g0 = spec.driver(t, x1, 0.0, zero_z);
        const double p0 = spec.constraint(t, x1, 0.0, zero_z);
        if (!finite(g0))
            throw EvaluationError("validate_problem: driver non-finite at " + describe_point(t, x1));
        if (!finite(p0))
            throw EvaluationError("validate_problem: constraint non-finite at " + describe_point(t, x1));
        rep.growth_estimates["driver"] = std::max(rep.growth_estimates["driver"], std::abs(g0) / denom);
        rep.growth_estimates["constraint"] =
            std::max(rep.growth_estimates["constraint"], std::abs(p0) / denom);

        const double psi = spec.terminal(x1);
        if (!finite(psi))
            throw EvaluationError("validate_problem: terminal non-finite at " + describe_point(t, x1));
    }
    return rep;
}

CoefficientSet builtin_problem(const std::string& name,
                               const std::map<std::string, double>& params) {
    CoefficientSet s;
    s.name = name;

    if (name == "unconstrained_linear" || name == "obstacle_put") {
        reject_unknown(params, {"rate", "strike", "vol", "drift", "T", "x0"}, name);
        const double rate = require(params, "rate", name);
        const double strike = require(params, "strike", name);
        const double vol = require(params, "vol", name);
        const double drift = defaulted(params, "drift", rate);
        s.horizon = defaulted(params, "T", 1.0);
        s.x0_hint = defaulted(params, "x0", strike);
        set_lognormal(s, drift, vol, rate);
        s.terminal = [strike](VecRef x) { return std::max(strike - x[0], 0.0); };
        if (name == "unconstrained_linear") {
            s.constraint = [](double, VecRef, double, VecRef) { return 1.0; };
            s.lip_phi = 1.0; // growth bound; the (y,z) slope is exactly 0
        } else {
            s.obstacle = [strike](double, VecRef x) { return std::max(strike - x[0], 0.0); };
            s.constraint = [strike](double, VecRef x, double y, VecRef) {
                return y - std::max(strike - x[0], 0.0);
            };
            s.lip_phi = 1.0;
        }
        return s;
    }

    if (name == "z_constraint") {
        reject_unknown(params, {"slope", "rate", "strike", "vol", "drift", "T", "x0"}, name);
        const double slope = require(params, "slope", name);
        const double rate = defaulted(params, "rate", 0.05);
        const double strike = defaulted(params, "strike", 100.0);
        const double vol = defaulted(params, "vol", 0.2);
        const double drift = defaulted(params, "drift", rate);
        s.horizon = defaulted(params, "T", 1.0);
        s.x0_hint = defaulted(params, "x0", strike);
        set_lognormal(s, drift, vol, rate);
        s.terminal = [strike](VecRef x) { return std::max(strike - x[0], 0.0); };
        s.constraint = [slope](double, VecRef, double y, VecRef z) {
            return y - slope * z.norm();
        };
        s.lip_phi = std::max(1.0, std::abs(slope));
        return s;
    }

    throw ConfigError("builtin_problem: unknown catalog name '" + name + "'");
}

} // namespace pvi
