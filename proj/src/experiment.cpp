#include "pvi/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace pvi {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using njson = nlohmann::json;

namespace {

const std::vector<std::string> kMethods = {"lsmc", "chain", "fd", "projected"};
const std::vector<std::string> kAnalyses = {"residual", "supersolution_family", "dominance",
                                            "skorohod", "refine"};

void reject_unknown_keys(const njson& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known)
            if (key == k)
                ok = true;
        if (!ok)
            throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_as(const njson& obj, const std::string& key, const std::string& where) {
    try {
        return obj.at(key).get<T>();
    } catch (const njson::exception&) {
        throw ConfigError("config: bad or missing key '" + key + "' in " + where);
    }
}

std::string alpha_tag(double a) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%g", a);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw Error("cannot open " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, path);
}

std::string surface_csv_bytes(const ValueSurface& s) {
    std::string out = "t,x,u\n";
    char buf[128];
    for (int k = 0; k < s.n_times(); ++k) {
        const double t = s.grid.time(k);
        for (int j = 0; j < s.n_nodes(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, s.xs[j], s.at(k, j));
            out += buf;
        }
    }
    return out;
}

struct ArtifactWriter {
    fs::path dir;
    std::vector<std::string> paths;

    void write(const std::string& name, const std::string& bytes) {
        atomic_write(dir / name, bytes);
        paths.push_back(name);
    }
    void write_json(const std::string& name, const ojson& j) {
        write(name, j.dump(2) + "\n");
    }
};

ojson surface_meta(const ExperimentConfig& cfg, const CoefficientSet& spec, double alpha) {
    ojson grid;
    grid["t0"] = 0.0;
    grid["t_end"] = spec.horizon;
    grid["n_steps"] = cfg.n_steps;
    if (cfg.n_space)
        grid["n_space"] = *cfg.n_space;
    if (cfg.x_min)
        grid["x_min"] = *cfg.x_min;
    if (cfg.x_max)
        grid["x_max"] = *cfg.x_max;
    ojson meta;
    meta["problem"] = cfg.problem_name;
    meta["method"] = cfg.method;
    meta["alpha"] = alpha;
    meta["grid"] = grid;
    if (cfg.method == "fd" || cfg.method == "projected") {
        ojson sc;
        sc["theta"] = cfg.theta;
        sc["penalty_treatment"] = cfg.penalty_treatment;
        meta["scheme"] = sc;
    } else {
        meta["scheme"] = nullptr;
    }
    return meta;
}

FdScheme scheme_from_config(const ExperimentConfig& cfg) {
    FdScheme sc;
    sc.theta = cfg.theta;
    sc.penalty = cfg.penalty_treatment == "explicit-lagged" ? FdScheme::Penalty::ExplicitLagged
                                                            : FdScheme::Penalty::SemiImplicit;
    sc.x_min = *cfg.x_min;
    sc.x_max = *cfg.x_max;
    sc.n_space = *cfg.n_space;
    return sc;
}

ojson convergence_json(const ConvergenceReport& rep) {
    ojson j;
    j["kind"] = "alpha_convergence";
    j["alphas"] = rep.alphas;
    j["u0"] = rep.u0;
    j["u0_stderr"] = rep.u0_stderr;
    j["cauchy_deltas"] = rep.cauchy_deltas;
    ojson viols = ojson::array();
    for (const auto& v : rep.monotonicity_violations) {
        ojson o;
        o["count"] = v.count;
        o["max_decrease"] = v.max_decrease;
        viols.push_back(o);
    }
    j["monotonicity_violations"] = viols;
    j["a_totals"] = rep.a_totals;
    j["limit_estimate"] = rep.limit_estimate;
    j["gap_ratios"] = rep.gap_ratios;
    j["richardson_valid"] = rep.richardson_valid;
    j["surfaces"] = rep.surfaces_meta;
    ojson rows = ojson::array();
    for (std::size_t i = 0; i < rep.alphas.size(); ++i) {
        ojson r;
        r["alpha"] = rep.alphas[i];
        r["u0"] = rep.u0[i];
        if (i == 0)
            r["delta_prev"] = nullptr;
        else
            r["delta_prev"] = rep.u0[i] - rep.u0[i - 1];
        r["a_total"] = rep.a_totals[i];
        rows.push_back(r);
    }
    j["rows"] = rows;
    return j;
}

ojson residual_json(double alpha, const ResidualReport& rr) {
    ojson row;
    row["alpha"] = alpha;
    row["sup_residual"] = rr.sup_residual;
    row["l1_residual"] = rr.l1_residual;
    row["nodes_pde_active"] = rr.nodes_pde_active;
    row["nodes_phi_active"] = rr.nodes_phi_active;
    row["excluded_nodes"] = rr.excluded_nodes;
    row["min_pde_residual"] = rr.min_pde_residual;
    row["min_constraint"] = rr.min_constraint;
    row["max_min_map"] = rr.max_min_map;
    ojson j;
    j["kind"] = "residual_norms";
    j["rows"] = ojson::array({row});
    return j;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    njson root;
    try {
        root = njson::parse(json_text);
    } catch (const njson::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(root, {"problem", "method", "grid", "mc", "scheme", "sweep",
                               "analyses", "output_dir"},
                        "root");

    ExperimentConfig cfg;
    if (!root.contains("problem") || !root["problem"].is_object())
        throw ConfigError("config: missing object key 'problem'");
    reject_unknown_keys(root["problem"], {"name", "params"}, "problem");
    cfg.problem_name = get_as<std::string>(root["problem"], "name", "problem");
    if (root["problem"].contains("params")) {
        for (const auto& [key, value] : root["problem"]["params"].items()) {
            if (!value.is_number())
                throw ConfigError("config: problem.params." + key + " must be a number");
            cfg.problem_params[key] = value.get<double>();
        }
    }

    cfg.method = get_as<std::string>(root, "method", "root");
    if (std::find(kMethods.begin(), kMethods.end(), cfg.method) == kMethods.end())
        throw ConfigError("config: unknown method '" + cfg.method + "'");

    if (!root.contains("grid") || !root["grid"].is_object())
        throw ConfigError("config: missing object key 'grid'");
    reject_unknown_keys(root["grid"], {"n_steps", "n_space", "x_min", "x_max"}, "grid");
    cfg.n_steps = get_as<int>(root["grid"], "n_steps", "grid");
    if (cfg.n_steps < 1)
        throw ConfigError("config: grid.n_steps must be >= 1");
    if (root["grid"].contains("n_space"))
        cfg.n_space = get_as<int>(root["grid"], "n_space", "grid");
    if (root["grid"].contains("x_min"))
        cfg.x_min = get_as<double>(root["grid"], "x_min", "grid");
    if (root["grid"].contains("x_max"))
        cfg.x_max = get_as<double>(root["grid"], "x_max", "grid");

    if (root.contains("mc")) {
        reject_unknown_keys(root["mc"],
                            {"n_paths", "seed", "basis_degree", "picard_iters", "literal_a"},
                            "mc");
        cfg.n_paths = get_as<int>(root["mc"], "n_paths", "mc");
        cfg.seed = get_as<std::uint64_t>(root["mc"], "seed", "mc");
        if (root["mc"].contains("basis_degree"))
            cfg.basis_degree = get_as<int>(root["mc"], "basis_degree", "mc");
        if (root["mc"].contains("picard_iters"))
            cfg.picard_iters = get_as<int>(root["mc"], "picard_iters", "mc");
        if (root["mc"].contains("literal_a"))
            cfg.literal_a = get_as<bool>(root["mc"], "literal_a", "mc");
    }

    if (root.contains("scheme")) {
        reject_unknown_keys(root["scheme"], {"theta", "penalty_treatment"}, "scheme");
        if (root["scheme"].contains("theta"))
            cfg.theta = get_as<double>(root["scheme"], "theta", "scheme");
        if (root["scheme"].contains("penalty_treatment"))
            cfg.penalty_treatment =
                get_as<std::string>(root["scheme"], "penalty_treatment", "scheme");
        if (cfg.penalty_treatment != "semi-implicit" &&
            cfg.penalty_treatment != "explicit-lagged")
            throw ConfigError("config: scheme.penalty_treatment must be 'semi-implicit' or "
                              "'explicit-lagged'");
    }

    if (root.contains("sweep")) {
        reject_unknown_keys(root["sweep"], {"alphas"}, "sweep");
        if (root["sweep"].contains("alphas")) {
            cfg.alphas = get_as<std::vector<double>>(root["sweep"], "alphas", "sweep");
            for (std::size_t i = 0; i < cfg.alphas.size(); ++i) {
                if (cfg.alphas[i] < 0.0)
                    throw ConfigError("config: sweep.alphas must be nonnegative");
                if (i > 0 && !(cfg.alphas[i] > cfg.alphas[i - 1]))
                    throw ConfigError("config: sweep.alphas must be strictly increasing");
            }
        }
    }

    if (root.contains("analyses")) {
        cfg.analyses = get_as<std::vector<std::string>>(root, "analyses", "root");
        for (const auto& a : cfg.analyses)
            if (std::find(kAnalyses.begin(), kAnalyses.end(), a) == kAnalyses.end())
                throw ConfigError("config: unknown analysis '" + a + "'");
    }

    cfg.output_dir = get_as<std::string>(root, "output_dir", "root");

    // Method-required fields.
    const bool spatial = cfg.method != "lsmc";
    if (spatial && (!cfg.n_space || !cfg.x_min || !cfg.x_max))
        throw ConfigError("config: grid.n_space/x_min/x_max required for method '" +
                          cfg.method + "'");
    if (cfg.method == "lsmc") {
        if (!root.contains("mc"))
            throw ConfigError("config: mc block (n_paths, seed) required for method 'lsmc'");
        if (!cfg.n_paths || *cfg.n_paths < 1)
            throw ConfigError("config: mc.n_paths must be >= 1");
    }
    if (cfg.method == "projected") {
        if (!cfg.alphas.empty())
            throw ConfigError("config: sweep.alphas not applicable to method 'projected'");
        if (!cfg.analyses.empty())
            throw ConfigError("config: analyses not supported for method 'projected'");
    } else if (cfg.alphas.empty()) {
        throw ConfigError("config: sweep.alphas required for method '" + cfg.method + "'");
    }
    for (const auto& a : cfg.analyses) {
        const bool surface_based =
            a == "residual" || a == "supersolution_family" || a == "dominance";
        if (surface_based && cfg.method != "fd" && cfg.method != "chain")
            throw ConfigError("config: analysis '" + a + "' needs method fd or chain");
        if (a == "dominance" && cfg.method != "fd")
            throw ConfigError("config: analysis 'dominance' needs method fd");
        if (a == "refine" && cfg.method != "fd")
            throw ConfigError("config: analysis 'refine' needs method fd");
        if (a == "skorohod" && !root.contains("mc"))
            throw ConfigError("config: analysis 'skorohod' needs the mc block");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    ojson j;
    ojson prob;
    prob["name"] = cfg.problem_name;
    ojson params;
    for (const auto& [k, v] : cfg.problem_params)
        params[k] = v;
    prob["params"] = params;
    j["problem"] = prob;
    j["method"] = cfg.method;
    ojson grid;
    grid["n_steps"] = cfg.n_steps;
    if (cfg.n_space)
        grid["n_space"] = *cfg.n_space;
    if (cfg.x_min)
        grid["x_min"] = *cfg.x_min;
    if (cfg.x_max)
        grid["x_max"] = *cfg.x_max;
    j["grid"] = grid;
    if (cfg.n_paths) {
        ojson mc;
        mc["n_paths"] = *cfg.n_paths;
        mc["seed"] = cfg.seed ? *cfg.seed : 0;
        mc["basis_degree"] = cfg.basis_degree;
        mc["picard_iters"] = cfg.picard_iters;
        mc["literal_a"] = cfg.literal_a;
        j["mc"] = mc;
    }
    if (cfg.method == "fd" || cfg.method == "projected") {
        ojson sc;
        sc["theta"] = cfg.theta;
        sc["penalty_treatment"] = cfg.penalty_treatment;
        j["scheme"] = sc;
    }
    if (!cfg.alphas.empty()) {
        ojson sweep;
        sweep["alphas"] = cfg.alphas;
        j["sweep"] = sweep;
    }
    j["analyses"] = cfg.analyses;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2) + "\n";
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
    const CoefficientSet spec = builtin_problem(cfg.problem_name, cfg.problem_params);
    const TimeGrid grid(0.0, spec.horizon, cfg.n_steps);
    const double x0 = spec.x0_hint;

    fs::create_directories(cfg.output_dir);
    ArtifactWriter out{fs::path(cfg.output_dir), {}};

    const bool deterministic = cfg.method == "chain" || cfg.method == "fd";

    if (cfg.method == "projected") {
        const FdScheme sc = scheme_from_config(cfg);
        const ValueSurface s = solve_projected_obstacle_fd(spec, sc, grid);
        out.write("surface_projected.csv", surface_csv_bytes(s));
        out.write_json("surface_projected.meta.json", surface_meta(cfg, spec, 0.0));
    } else if (deterministic) {
        std::optional<ChainDiscretization> chain;
        if (cfg.method == "chain")
            chain = build_chain(spec, grid, *cfg.x_min, *cfg.x_max, *cfg.n_space);
        const FdScheme sc =
            cfg.method == "fd" ? scheme_from_config(cfg) : FdScheme{};

        std::vector<ValueSurface> surfaces;
        std::vector<std::string> surface_files;
        for (double a : cfg.alphas) {
            ValueSurface s = cfg.method == "chain" ? solve_penalized_chain(spec, *chain, a)
                                                   : solve_penalized_fd(spec, sc, grid, a);
            const std::string base = "surface_alpha" + alpha_tag(a);
            out.write(base + ".csv", surface_csv_bytes(s));
            out.write_json(base + ".meta.json", surface_meta(cfg, spec, a));
            surface_files.push_back(base + ".csv");
            surfaces.push_back(std::move(s));
        }

        std::optional<ConvergenceReport> report;
        if (cfg.alphas.size() >= 4) {
            SweepResources res;
            res.grid = grid;
            res.x0 = x0;
            res.x_min = cfg.x_min.value_or(0.0);
            res.x_max = cfg.x_max.value_or(0.0);
            res.n_space = cfg.n_space.value_or(0);
            res.scheme = sc;
            ConvergenceReport rep =
                summarize_surface_sweep(cfg.alphas, surfaces, grid.t0, x0);
            rep.surfaces_meta = surface_files;
            report = std::move(rep);
            out.write_json("convergence_report.json", convergence_json(*report));
        }

        for (const auto& analysis : cfg.analyses) {
            if (analysis == "residual") {
                for (std::size_t i = 0; i < cfg.alphas.size(); ++i) {
                    const ResidualReport rr = viscosity_residual(surfaces[i], spec);
                    out.write_json("residual_alpha" + alpha_tag(cfg.alphas[i]) + ".json",
                                   residual_json(cfg.alphas[i], rr));
                }
            } else if (analysis == "supersolution_family") {
                const auto rows =
                    supersolution_family_residual(surfaces.back(), spec, {0.0, 10.0, 100.0});
                ojson j;
                j["kind"] = "supersolution_family";
                j["alpha"] = cfg.alphas.back();
                ojson jr = ojson::array();
                for (const auto& r : rows) {
                    ojson o;
                    o["m"] = r.m;
                    o["min_residual"] = r.min_residual;
                    o["min_residual_literal"] = r.min_residual_literal;
                    jr.push_back(o);
                }
                j["rows"] = jr;
                out.write_json("supersolution_family.json", j);
            } else if (analysis == "dominance") {
                if (!spec.has_obstacle())
                    throw ShapeError("run_experiment: dominance analysis needs an obstacle "
                                     "constraint");
                const ValueSurface proj = solve_projected_obstacle_fd(spec, sc, grid);
                out.write("projected_oracle.csv", surface_csv_bytes(proj));
                out.write_json("projected_oracle.meta.json", surface_meta(cfg, spec, 0.0));
                ValueSurface constant = proj;
                double sup_psi = 0.0;
                {
                    Vec xv(1);
                    for (double xj : proj.xs) {
                        xv[0] = xj;
                        sup_psi = std::max(sup_psi, spec.terminal(xv));
                    }
                }
                std::fill(constant.values.begin(), constant.values.end(), sup_psi);
                ojson j;
                j["kind"] = "dominance";
                j["alpha"] = cfg.alphas.back();
                ojson jr = ojson::array();
                for (const auto& [name, cand] :
                     std::vector<std::pair<std::string, const ValueSurface*>>{
                         {"projected_oracle", &proj}, {"constant_sup_terminal", &constant}}) {
                    const DominanceResult dr = dominance_check(surfaces.back(), *cand);
                    ojson o;
                    o["candidate"] = name;
                    o["is_dominated"] = dr.is_dominated;
                    o["max_excess"] = dr.max_excess;
                    jr.push_back(o);
                }
                j["rows"] = jr;
                out.write_json("dominance.json", j);
            } else if (analysis == "skorohod") {
                if (!spec.has_obstacle())
                    throw ShapeError("run_experiment: skorohod analysis needs an obstacle "
                                     "constraint");
                Vec x0v = Vec::Constant(spec.dim, x0);
                const PathEnsemble ens =
                    simulate_paths(spec, 0.0, x0v, grid, *cfg.n_paths, cfg.seed.value_or(0));
                RegressionBasis basis;
                basis.degree = cfg.basis_degree;
                ojson j;
                j["kind"] = "skorohod";
                const double eps = 0.5;
                j["eps"] = eps;
                ojson jr = ojson::array();
                for (double a : cfg.alphas) {
                    LsmcOptions opt;
                    opt.picard_iters = cfg.picard_iters;
                    opt.literal_increasing_part = cfg.literal_a;
                    const PenalizedBsdeSolution sol =
                        solve_penalized_lsmc(ens, spec, a, basis, opt);
                    const SkorohodResult sk = skorohod_flatness(sol, spec, eps);
                    ojson o;
                    o["alpha"] = a;
                    o["off_constraint_mass"] = sk.off_constraint_mass;
                    o["total_mass"] = sk.total_mass;
                    o["ratio"] = sk.ratio;
                    jr.push_back(o);
                }
                j["rows"] = jr;
                out.write_json("skorohod.json", j);
            } else if (analysis == "refine") {
                std::vector<std::pair<int, int>> levels;
                const int tf = cfg.theta == 0.0 ? 4 : 2;
                levels.emplace_back(*cfg.n_space, cfg.n_steps);
                levels.emplace_back(2 * *cfg.n_space, tf * cfg.n_steps);
                levels.emplace_back(4 * *cfg.n_space, tf * tf * cfg.n_steps);
                std::optional<double> oracle;
                if (cfg.problem_name == "unconstrained_linear") {
                    const auto& p = cfg.problem_params;
                    oracle = closed_form_linear(p.at("rate"), p.at("vol"), p.at("strike"), x0,
                                                spec.horizon);
                }
                const auto rows =
                    refine_study(spec, sc, cfg.alphas.back(), levels, x0, oracle);
                ojson j;
                j["kind"] = "refinement";
                ojson jr = ojson::array();
                for (const auto& r : rows) {
                    ojson o;
                    o["level"] = r.level;
                    o["n_space"] = r.n_space;
                    o["n_steps"] = r.n_steps;
                    o["u0"] = r.u0;
                    o["delta_prev"] = r.delta_prev ? ojson(*r.delta_prev) : ojson(nullptr);
                    o["empirical_order"] =
                        r.empirical_order ? ojson(*r.empirical_order) : ojson(nullptr);
                    jr.push_back(o);
                }
                j["rows"] = jr;
                out.write_json("refine.json", j);
            }
        }
    } else { // lsmc
        Vec x0v = Vec::Constant(spec.dim, x0);
        const PathEnsemble ens =
            simulate_paths(spec, 0.0, x0v, grid, *cfg.n_paths, cfg.seed.value_or(0));
        RegressionBasis basis;
        basis.degree = cfg.basis_degree;
        LsmcOptions opt;
        opt.picard_iters = cfg.picard_iters;
        opt.literal_increasing_part = cfg.literal_a;

        std::vector<double> u0s, stderrs, a_totals;
        std::vector<SkorohodResult> skorohods;
        const bool want_skorohod = std::find(cfg.analyses.begin(), cfg.analyses.end(),
                                             "skorohod") != cfg.analyses.end();
        for (double a : cfg.alphas) {
            const PenalizedBsdeSolution sol = solve_penalized_lsmc(ens, spec, a, basis, opt);
            const IncreasingPartStats st = increasing_part_stats(sol);
            ojson j;
            j["kind"] = "lsmc_solution";
            j["alpha"] = a;
            j["y0"] = sol.y0;
            j["y0_stderr"] = sol.y0_stderr;
            j["a_mean_total"] = st.mean_total;
            j["a_max_total"] = st.max_total;
            j["fraction_active"] = st.fraction_active;
            out.write_json("solution_alpha" + alpha_tag(a) + ".json", j);
            u0s.push_back(sol.y0);
            stderrs.push_back(sol.y0_stderr);
            a_totals.push_back(st.mean_total);
            if (want_skorohod)
                skorohods.push_back(skorohod_flatness(sol, spec, 0.5));
        }
        if (cfg.alphas.size() >= 4) {
            const ConvergenceReport rep =
                summarize_scalar_sweep(cfg.alphas, u0s, stderrs, a_totals);
            out.write_json("convergence_report.json", convergence_json(rep));
        }
        if (want_skorohod) {
            ojson j;
            j["kind"] = "skorohod";
            j["eps"] = 0.5;
            ojson jr = ojson::array();
            for (std::size_t i = 0; i < cfg.alphas.size(); ++i) {
                ojson o;
                o["alpha"] = cfg.alphas[i];
                o["off_constraint_mass"] = skorohods[i].off_constraint_mass;
                o["total_mass"] = skorohods[i].total_mass;
                o["ratio"] = skorohods[i].ratio;
                jr.push_back(o);
            }
            j["rows"] = jr;
            out.write_json("skorohod.json", j);
        }
    }

    // Manifest: config echo plus a content hash of every artifact.
    ojson manifest;
    manifest["config"] = ojson::parse(config_to_json(cfg));
    ojson arts = ojson::array();
    for (const auto& rel : out.paths) {
        ojson a;
        a["path"] = rel;
        a["sha256"] = sha256_file_hex((out.dir / rel).string());
        arts.push_back(a);
    }
    manifest["artifacts"] = arts;
    atomic_write(out.dir / "run_manifest.json", manifest.dump(2) + "\n");
    out.paths.push_back("run_manifest.json");
    return out.paths;
}

int run_experiment(const std::string& config_path, std::ostream& err) {
    try {
        const ExperimentConfig cfg = load_config(config_path);
        run_experiment(cfg);
        return 0;
    } catch (const std::exception& e) {
        const char* type = "error";
        if (dynamic_cast<const ConfigError*>(&e))
            type = "config_error";
        else if (dynamic_cast<const ShapeError*>(&e))
            type = "shape_error";
        else if (dynamic_cast<const StepSizeError*>(&e))
            type = "step_size_error";
        else if (dynamic_cast<const DiscretizationError*>(&e))
            type = "discretization_error";
        else if (dynamic_cast<const Error*>(&e))
            type = "solver_error";
        ojson j;
        j["error"]["type"] = type;
        j["error"]["message"] = e.what();
        err << j.dump(2) << "\n";
        return 1;
    }
}

void emit_table(const std::string& report_path, const std::string& kind, std::ostream& os) {
    std::ifstream in(report_path);
    if (!in)
        throw Error("emit_table: cannot open " + report_path);
    njson j;
    try {
        in >> j;
    } catch (const njson::exception& e) {
        throw Error(std::string("emit_table: invalid report JSON: ") + e.what());
    }
    if (!j.contains("kind") || j["kind"].get<std::string>() != kind)
        throw ShapeError("emit_table: report kind '" +
                         (j.contains("kind") ? j["kind"].get<std::string>() : "<none>") +
                         "' does not match requested '" + kind + "'");

    std::vector<std::string> cols;
    if (kind == "alpha_convergence")
        cols = {"alpha", "u0", "delta_prev", "a_total"};
    else if (kind == "refinement")
        cols = {"level", "u0", "delta_prev", "empirical_order"};
    else if (kind == "residual_norms")
        cols = {"alpha", "sup_residual", "l1_residual", "nodes_pde_active", "nodes_phi_active"};
    else
        throw ConfigError("emit_table: unknown kind '" + kind + "'");

    for (std::size_t c = 0; c < cols.size(); ++c)
        os << (c ? "," : "") << cols[c];
    os << "\n";
    char buf[64];
    for (const auto& row : j.at("rows")) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c)
                os << ",";
            if (!row.contains(cols[c]) || row[cols[c]].is_null())
                continue;
            const auto& v = row[cols[c]];
            if (v.is_number_integer()) {
                os << v.get<long long>();
            } else {
                std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
                os << buf;
            }
        }
        os << "\n";
    }
}

std::string sha256_file_hex(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw Error("sha256_file_hex: cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    unsigned char buf[1 << 16];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0)
        EVP_DigestUpdate(ctx, buf, got);
    std::fclose(f);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

} // namespace pvi
