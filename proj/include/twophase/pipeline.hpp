#pragma once

// Pilot draw, rule estimation from the pilot, the second-phase draw and the
// IPW / one-step estimators with influence-function standard errors.

#include "twophase/dataset.hpp"
#include "twophase/eif.hpp"
#include "twophase/maximin.hpp"
#include "twophase/moments.hpp"
#include "twophase/rules.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace twophase {

using Rng = std::mt19937_64;

/// varpi / (1 + log(varpi n / c)).
double kappa_default(double varpi, double n, double c);

Indicator draw_pilot(Eigen::Index n, double kappa, Rng& rng);

struct NamedRule {
    std::string name;
    SamplingRule rule;
};

struct DesignOptions {
    double varpi = 0.3;
    double kappa = 0.0;
    /// Rules to build besides uniform, sopt:j and sum: any of copt, gopt.
    bool constrained = true;
    bool global = true;
    std::optional<Vector> priority;  // builds "priority" when set
    MomentFitOptions moments;
    MaximinOptions maximin;
};

struct RuleBundle {
    NuisanceParams eta;
    Vector theta_pilot;
    std::shared_ptr<const MomentModels> models;
    double varpi = 0.0;
    double kappa = 0.0;
    double uniform_level = 0.0;  // budget-exhausting constant rule on non-pilot units
    Vector budget_weight;        // (1 - R1_i) / n
    Matrix sigma;                // n x d fitted conditional standard deviations
    Matrix pi;                   // n x d fitted conditional means
    std::optional<EmpiricalBound> bound;
    std::optional<MaximinSolution> constrained;
    std::optional<MaximinSolution> global;
    std::optional<MaximinSolution> priority;
    std::vector<NamedRule> rules;

    const SamplingRule& rule(const std::string& name) const;
    bool has_rule(const std::string& name) const;
};

/// Fits nuisances, the pilot estimate, moment models, and every rule from the
/// pilot units of `data` (R1 = 1 rows, U observed there). Rule names:
/// uniform, sopt:1..d, sum, copt, gopt, priority.
RuleBundle estimate_rules(const EstimationProblem& problem, const TwoPhaseDataset& data, const DesignOptions& options);

/// (1/n) sum_{R1 = 0} rule(V_i) - (varpi - kappa).
double budget_residual(const SamplingRule& rule, const TwoPhaseDataset& data, double varpi, double kappa);

/// Draws R2 for non-pilot units and records rule values and rho_n.
void draw_second_phase(TwoPhaseDataset& data, const SamplingRule& rule, Rng& rng);
/// Records rule values and rho_n without drawing.
void set_inclusion(TwoPhaseDataset& data, const SamplingRule& rule);

enum class EstimatorKind { OneStep, ExcludePilot, IvwMeta, IpwOnly, Pilot };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

struct EstimateReport {
    Vector theta;
    Vector se;
    Vector ci_lo;
    Vector ci_hi;
    EstimatorKind kind = EstimatorKind::OneStep;
    std::string rule_used;
    double sampled_fraction = 0.0;
};

constexpr double kNormalQuantile975 = 1.959964;

/// Root of sum_i R_i psi_i(theta) / rho_n_i = 0.
Vector ipw_estimate(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta);

EstimateReport ipw_report(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                          const std::string& rule_name);

/// theta_ipw - (1/n) sum_i (R_i / rho_n_i - 1) pi(V_i), with the standard error
/// from the empirical variance of the estimated observed-data influence values.
EstimateReport one_step(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                        const MomentModels& models, const Vector& theta_ipw, const std::string& rule_name);

/// The same construction on non-pilot units only, with inclusion probability
/// equal to the rule value.
EstimateReport one_step_excluding_pilot(const EstimationProblem& problem, const TwoPhaseDataset& data,
                                        const NuisanceParams& eta, const MomentModels& models,
                                        const std::string& rule_name);

/// Pilot-only estimate with standard error from the pilot psi values.
EstimateReport pilot_estimate(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                              const Vector& theta_pilot);

EstimateReport ivw_combine(const EstimateReport& a, const EstimateReport& b);

/// Runs the requested estimators on a dataset with completed sampling.
std::vector<EstimateReport> run_estimators(const EstimationProblem& problem, const TwoPhaseDataset& data,
                                           const NuisanceParams& eta, const MomentModels& models,
                                           const Vector& theta_pilot, const std::vector<EstimatorKind>& kinds,
                                           const std::string& rule_name);

} // namespace twophase
