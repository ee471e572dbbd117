// Experiment runner CLI: run / table / validate.

#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pvi/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pvi: penalized constrained-BSDE / variational-inequality laboratory"};
    app.require_subcommand(1);

    std::string run_config;
    auto* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", run_config, "experiment config JSON")->required();

    std::string table_report, table_kind;
    auto* table = app.add_subcommand("table", "flatten a report JSON to CSV on stdout");
    table->add_option("report", table_report, "report JSON file")->required();
    table->add_option("--kind", table_kind, "alpha_convergence | refinement | residual_norms")
        ->required();

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "schema-check a config without running");
    validate->add_option("config", validate_config, "experiment config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed())
        return pvi::run_experiment(run_config, std::cout);

    if (table->parsed()) {
        try {
            pvi::emit_table(table_report, table_kind, std::cout);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return 1;
        }
    }

    if (validate->parsed()) {
        try {
            pvi::load_config(validate_config);
            std::cout << "{\"valid\": true}\n";
            return 0;
        } catch (const std::exception& e) {
            std::cout << "{\"valid\": false, \"error\": " << nlohmann::json(e.what()).dump()
                      << "}\n";
            return 1;
        }
    }
    return 1;
}
