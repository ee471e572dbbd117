#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvi/analysis.hpp"

namespace pvi {

// Experiment description backing the `run` CLI verb. JSON schema is strict:
// unknown keys are errors.
struct ExperimentConfig {
    std::string problem_name;
    std::map<std::string, double> problem_params;
    std::string method; // lsmc | chain | fd | projected

    int n_steps = 0;
    std::optional<int> n_space;
    std::optional<double> x_min, x_max;

    std::optional<int> n_paths;
    std::optional<std::uint64_t> seed;
    int basis_degree = 4;
    int picard_iters = 2;
    bool literal_a = false;

    double theta = 1.0;
    std::string penalty_treatment = "semi-implicit"; // or "explicit-lagged"

    std::vector<double> alphas;

    std::vector<std::string> analyses; // subset of {residual, supersolution_family,
                                       //            dominance, skorohod, refine}
    std::string output_dir;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg); // canonical echo (fixed key order)

// Executes the configured pipeline, writing surfaces (CSV + metadata sidecar),
// reports (JSON), and a run manifest with a SHA-256 per artifact. Artifact
// writes are atomic (write-temp-then-rename). Returns the manifest-relative
// artifact paths in write order.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg);

// CLI-facing wrapper: returns the process exit status, printing a
// machine-readable error JSON to `err` on failure.
int run_experiment(const std::string& config_path, std::ostream& err);

// Flattens a report JSON to CSV on `out`. Kinds: alpha_convergence,
// refinement, residual_norms. The report's embedded kind must match.
void emit_table(const std::string& report_path, const std::string& kind, std::ostream& out);

std::string sha256_file_hex(const std::string& path);

} // namespace pvi
