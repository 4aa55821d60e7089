#include "twophase/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace twophase;
    CLI::App app{"Optimal and maximin second-phase sampling rules for two-phase studies"};
    app.require_subcommand(1);

    SimulateArgs sim;
    std::uint64_t sim_seed = 0;
    double sim_varpi = 0.0;
    double sim_kappa_c = 0.0;
    std::vector<std::string> sim_rules;
    std::vector<double> sim_priority;
    auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo scenario and write the aggregate table");
    simulate->add_option("--scenario", sim.scenario, "Scenario file (key = value)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", sim.out, "Output CSV")->required();
    auto* o_seed = simulate->add_option("--seed", sim_seed, "Override the scenario seed");
    auto* o_varpi = simulate->add_option("--varpi", sim_varpi, "Override the sampling budget");
    auto* o_kc = simulate->add_option("--kappa-c", sim_kappa_c, "Override the pilot-fraction constant c");
    auto* o_rules = simulate->add_option("--rules", sim_rules, "Override the rule list")->delimiter(',');
    auto* o_prio = simulate->add_option("--priority", sim_priority, "Priority weights a1,a2,...")->delimiter(',');
    simulate->add_option("--threads", sim.threads, "Worker threads")->default_val(1)->check(CLI::PositiveNumber);

    DesignArgs design;
    double design_kappa = 0.0;
    double design_kappa_c = 0.0;
    std::vector<double> design_priority;
    auto* des = app.add_subcommand("design", "Estimate sampling rules from pilot data");
    des->add_option("--data", design.data, "Dataset CSV with pilot rows marked")->required()->check(CLI::ExistingFile);
    des->add_option("--schema", design.schema, "Schema file naming column roles")->required()->check(CLI::ExistingFile);
    des->add_option("--out", design.out, "Output rule file")->required();
    des->add_option("--varpi", design.varpi, "Sampling budget")->default_val(0.3);
    auto* d_kappa = des->add_option("--kappa", design_kappa, "Pilot fraction used when drawing the pilot");
    auto* d_kc = des->add_option("--kappa-c", design_kappa_c, "Constant c in the default pilot fraction (default: dim V)");
    des->add_option("--rules", design.rules, "Maximin rules to build (copt, gopt)")->delimiter(',')->default_str("copt,gopt");
    auto* d_prio = des->add_option("--priority", design_priority, "Priority weights a1,a2,...")->delimiter(',');
    des->add_option("--probs-out", design.probs_out, "CSV of every rule's inclusion probability per row");
    des->add_option("--draw-out", design.draw_out, "Draw the second phase and write the dataset with R2 filled in");
    des->add_option("--draw-rule", design.draw_rule, "Rule used by --draw-out")->default_val("gopt");
    des->add_option("--seed", design.seed, "Seed for --draw-out")->default_val(1);

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Estimate the parameter from completed two-phase data");
    estimate->add_option("--data", est.data, "Dataset CSV with R1 and R2")->required()->check(CLI::ExistingFile);
    estimate->add_option("--schema", est.schema, "Schema file")->required()->check(CLI::ExistingFile);
    estimate->add_option("--rules", est.rules, "Rule file written by design")->required()->check(CLI::ExistingFile);
    estimate->add_option("--rule", est.rule, "Rule that drove the second-phase draw")->default_val("gopt");
    estimate->add_option("--out", est.out, "Output report CSV")->required();
    estimate->add_option("--estimators", est.estimators, "onestep, exclude-pilot, ivw, ipw, pilot")
        ->delimiter(',')
        ->default_str("onestep");

    double demo_varpi = 0.3;
    auto* demo = app.add_subcommand("demo-classification", "Exact bounds for the diagnostic-test triple");
    demo->add_option("--varpi", demo_varpi, "Sampling budget")->default_val(0.3);

    CLI11_PARSE(app, argc, argv);

    if (*simulate) {
        if (*o_seed) sim.seed = sim_seed;
        if (*o_varpi) sim.varpi = sim_varpi;
        if (*o_kc) sim.kappa_c = sim_kappa_c;
        if (*o_rules) sim.rules = sim_rules;
        if (*o_prio) sim.priority = sim_priority;
        return cmd_simulate(sim, std::cerr);
    }
    if (*des) {
        if (*d_kappa) design.kappa = design_kappa;
        if (*d_kc) design.kappa_c = design_kappa_c;
        if (*d_prio) design.priority = design_priority;
        return cmd_design(design, std::cout);
    }
    if (*estimate) return cmd_estimate(est, std::cout);
    if (*demo) return cmd_demo_classification(demo_varpi, std::cout);
    return kExitInvalid;
}
