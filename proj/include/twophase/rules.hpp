#pragma once

// Second-phase sampling rules, the budget threshold solver and empirical
// efficiency-bound evaluation.

#include "twophase/moments.hpp"
#include "twophase/types.hpp"

#include <map>
#include <memory>
#include <variant>
#include <vector>

namespace twophase {

// ---------------------------------------------------------------------------
// Threshold solver

/// h(tau) = sum_i weight_i min(sigma_i / tau, 1), precomputed for fast
/// evaluation: units are sorted once and h is evaluated by binary search.
class ThresholdFunction {
public:
    ThresholdFunction(std::span<const double> sigma, std::span<const double> weight);

    double operator()(double tau) const;
    double max_sigma() const { return sigma_.empty() ? 0.0 : sigma_.front(); }
    /// Total weight on units with sigma > 0: the supremum of h.
    double positive_weight() const { return positive_weight_; }
    double weighted_sigma() const { return weighted_sigma_; }

private:
    std::vector<double> sigma_;       // descending
    std::vector<double> cum_weight_;  // cum_weight_[k] = sum of weights of the first k units
    std::vector<double> tail_wsigma_; // tail_wsigma_[k] = sum over units k.. of weight * sigma
    double positive_weight_ = 0.0;
    double weighted_sigma_ = 0.0;
};

/// tau == 0 means the budget saturates: the rule is identically one.
struct Threshold {
    double tau = 0.0;
    double residual = 0.0;  // h(tau) - target
    int iterations = 0;
    bool saturated() const { return tau == 0.0; }
};

/// Solves sum_i weight_i min(sigma_i / tau, 1) = target by bisection on a
/// bracket [tau_lo, tau_hi] with h(tau_lo) >= target >= h(tau_hi), finished by
/// an exact solve on the linear piece containing the root.
Threshold solve_threshold(std::span<const double> sigma, std::span<const double> weight, double target);

/// Mean form: (1/m) sum_i min(sigma_i / tau, 1) = target.
Threshold solve_threshold(std::span<const double> sigma, double target);

/// Rule values min(sigma_i / tau, 1) at a solved threshold.
Vector truncated_values(std::span<const double> sigma, const Threshold& t);

// ---------------------------------------------------------------------------
// Rules

/// lambda(v) = sqrt(sum_j coef_j sigma_j(v)^2) from fitted moment models.
struct MomentScore {
    std::shared_ptr<const MomentModels> models;
    Vector coef;
};

/// lambda(v) looked up by exact first-phase value (finite supports).
struct TableScore {
    std::map<std::vector<double>, double> values;
};

using Score = std::variant<MomentScore, TableScore>;

double eval_score(const Score& score, Row v);

class SamplingRule;

struct UniformRule {
    double c = 1.0;
};

struct TruncatedRule {
    Score score;
    double tau = 0.0;  // 0: saturated, the rule is identically one
};

struct MixtureRule {
    std::shared_ptr<const SamplingRule> base;
    std::vector<SamplingRule> components;
    Vector weights;
};

class SamplingRule {
public:
    using Variant = std::variant<UniformRule, TruncatedRule, MixtureRule>;

    SamplingRule(UniformRule r);
    SamplingRule(TruncatedRule r);
    SamplingRule(MixtureRule r);

    static SamplingRule uniform(double c) { return SamplingRule(UniformRule{c}); }
    static SamplingRule truncated(Score score, double tau) { return SamplingRule(TruncatedRule{std::move(score), tau}); }
    static SamplingRule mixture(SamplingRule base, std::vector<SamplingRule> components, Vector weights);

    const Variant& variant() const { return rule_; }

    double eval(Row v) const;
    Vector eval_all(const RowMatrix& V) const;

private:
    Variant rule_;
};

/// Scalar optimal (Neyman-type) rule score for component j: lambda = sigma_j.
MomentScore component_score(std::shared_ptr<const MomentModels> models, int j);
/// Sum-criterion score: lambda = sqrt(sum_j sigma_j^2).
MomentScore sum_score(std::shared_ptr<const MomentModels> models);

/// Truncated rule whose threshold spends `target` over the rows of V weighted
/// by `budget_weight`.
SamplingRule budget_rule(const Score& score, const RowMatrix& V, const Vector& budget_weight, double target);

// ---------------------------------------------------------------------------
// Efficiency bound

/// Empirical efficiency bound over a finite set of points (sample rows or the
/// support of a discrete law) with point weights summing to one.
struct EmpiricalBound {
    Matrix sigma;    // n x d conditional standard deviations
    Matrix pi;       // n x d conditional means
    Vector rho0;     // benchmark rule values
    Vector weight;   // point weights
    Vector xi;       // sum_i weight_i sigma_ij^2 / rho0_i
    Vector var_pi;   // weighted variance of pi_j
    Vector b;        // xi + var_pi

    int dim() const { return static_cast<int>(sigma.cols()); }
    Eigen::Index points() const { return sigma.rows(); }

    /// sum_i weight_i sigma_ij^2 / rho_i per component.
    Vector variance_term(const Vector& rho) const;
    /// Efficiency bound per component under rule values rho.
    Vector bound_under(const Vector& rho) const;
};

EmpiricalBound empirical_bound(const Matrix& sigma, const Matrix& pi, const Vector& rho0, const Vector& weight);

} // namespace twophase
