#pragma once

// Subcommand implementations behind the command-line tool. Each returns a
// process exit code: 0 on success, 1 when a hard identity or replicate check
// fails, 2 on invalid input.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace twophase {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInvalid = 2;

struct SimulateArgs {
    std::string scenario;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> varpi;
    std::optional<double> kappa_c;
    std::optional<std::vector<std::string>> rules;
    std::optional<std::vector<double>> priority;
    int threads = 1;
};

struct DesignArgs {
    std::string data;
    std::string schema;
    std::string out;  // rule file
    double varpi = 0.3;
    std::optional<double> kappa;    // pilot fraction used when the pilot was drawn
    std::optional<double> kappa_c;  // otherwise kappa = varpi / (1 + log(varpi n / c)), c defaults to dim(V)
    std::vector<std::string> rules{"copt", "gopt"};
    std::optional<std::vector<double>> priority;
    std::string probs_out;
    std::string draw_out;
    std::string draw_rule = "gopt";
    std::uint64_t seed = 1;
};

struct EstimateArgs {
    std::string data;
    std::string schema;
    std::string rules;  // rule file
    std::string rule = "gopt";
    std::string out;
    std::vector<std::string> estimators{"onestep"};
};

int cmd_simulate(const SimulateArgs& args, std::ostream& log);
int cmd_design(const DesignArgs& args, std::ostream& log);
int cmd_estimate(const EstimateArgs& args, std::ostream& log);
int cmd_demo_classification(double varpi, std::ostream& out);

} // namespace twophase
