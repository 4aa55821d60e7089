#pragma once

// Synthetic data generators and the seeded Monte Carlo harness that compares
// sampling rules by bias, Monte Carlo SE, relative efficiency and coverage.

#include "twophase/kv_config.hpp"
#include "twophase/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace twophase {

enum class Dgp { AteScalar, AteMulti, MeanScalar, MeanMulti, RegScalar, RegMulti };

std::string to_string(Dgp dgp);
Dgp parse_dgp(const std::string& name);

/// Fully observed draw: first-phase V and second-phase U for every unit.
struct SimData {
    RowMatrix V;
    RowMatrix U;
};

SimData gen_ate_scalar(Eigen::Index n, int q, Rng& rng);
SimData gen_ate_multi(Eigen::Index n, int q, Rng& rng);
SimData gen_mean_scalar(Eigen::Index n, int q, Rng& rng);
SimData gen_mean_multi(Eigen::Index n, int q, Rng& rng);
SimData gen_reg_scalar(Eigen::Index n, int q, Rng& rng);
SimData gen_reg_multi(Eigen::Index n, int q, Rng& rng);
SimData generate(Dgp dgp, Eigen::Index n, int q, Rng& rng);

EstimationProblem dgp_problem(Dgp dgp, int q);
Vector dgp_truth(Dgp dgp);
/// Default constant c in kappa = varpi / (1 + log(varpi n / c)).
double dgp_kappa_constant(Dgp dgp, int q);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate);

struct ScenarioSpec {
    Dgp dgp = Dgp::AteScalar;
    Eigen::Index n = 2000;
    int q = 1;
    double varpi = 0.3;
    int reps = 500;
    std::uint64_t seed = 1;
    std::vector<std::string> rules{"uniform", "sopt"};
    std::vector<EstimatorKind> estimators{EstimatorKind::OneStep};
    std::optional<double> kappa_c;
    std::optional<Vector> priority;
    std::optional<double> ridge;  // moment-model penalty; default scales with dim V

    static ScenarioSpec from_config(const KvConfig& cfg);
    static ScenarioSpec load(const std::string& path);
    /// Echo of the effective configuration, one `key = value` per line.
    std::vector<std::string> describe() const;
    void validate() const;
};

struct ReplicateRecord {
    std::string rule;
    EstimatorKind estimator = EstimatorKind::OneStep;
    Vector theta;
    Vector se;
    std::vector<bool> covered;
    double sampled_fraction = 0.0;
};

struct ReplicateResult {
    bool ok = false;
    std::string error;
    std::vector<ReplicateRecord> records;
};

struct AggregateRow {
    std::string rule;
    std::string estimator;
    int component = 1;
    double bias = 0.0;
    double se = 0.0;
    std::optional<double> re;
    double coverage = 0.0;
    double mean_se = 0.0;
    double sampled_fraction = 0.0;
    int reps_ok = 0;
    int reps_failed = 0;
};

struct AggregateTable {
    std::vector<AggregateRow> rows;
    int failed = 0;
    std::vector<std::string> failure_messages;

    const AggregateRow& find(const std::string& rule, const std::string& estimator, int component) const;
};

/// Expands rule names: "sopt" becomes sopt:1..d.
std::vector<std::string> expand_rules(const std::vector<std::string>& rules, int d);

ReplicateResult run_replicate(const ScenarioSpec& spec, int replicate);
AggregateTable aggregate(const ScenarioSpec& spec, const std::vector<ReplicateResult>& results);
AggregateTable run_scenario(const ScenarioSpec& spec, int threads = 1);

std::string table_to_csv(const ScenarioSpec& spec, const AggregateTable& table);

} // namespace twophase
