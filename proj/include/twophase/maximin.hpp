#pragma once

// Maximin sampling rules: the relative-improvement objective, the maximin
// problem over convex combinations of component rules, the global problem
// through its dual over the simplex, and priority-weighted variants.

#include "twophase/rules.hpp"

#include <vector>

namespace twophase {

struct Improvement {
    Vector components;  // b_j^{-1} (xi_j - sum_i weight_i sigma_ij^2 / rho_i)
    double min = 0.0;
};

Improvement relative_improvement(const EmpiricalBound& bound, const Vector& rho);

struct MaximinOptions {
    double grid_step = 0.01;
    double refine_tol = 1e-5;
    double polish_step = 1e-4;   // primal polish of the dual maximiser
    double polish_tol = 1e-11;
    int subgradient_iters = 2000;
    int grid_max_dim = 4;  // above this, projected subgradient is used
};

struct MaximinSolution {
    Vector w;                 // weights in the feasible set of the problem
    Vector rho;               // rule values on the bound's points
    Improvement improvement;  // per-component improvement of the returned rule
    double objective = 0.0;   // value of the solved criterion
    // Global and priority problems: the rule is min(lambda / tau, 1) with
    // lambda = sqrt(sum_j score_coef_j sigma_j^2).
    Vector score_coef;
    Threshold threshold;
};

/// Maximises min_j f_j(rho_w) over {w >= 0, sum w <= 1}, where
/// rho_w = rho0 + sum_k w_k (rho_k - rho0) and column k of `component_rho`
/// holds rho_k on the bound's points.
MaximinSolution solve_constrained_maximin(const EmpiricalBound& bound, const Matrix& component_rho,
                                          const MaximinOptions& options = {});

/// Budget over the bound's points: sum_i budget_weight_i rho_i = budget_target.
struct Budget {
    Vector weight;
    double target = 0.0;
};

/// Dual objective G(w) = sum_j w_j xi_j / b_j - sum_i weight_i s_i max(s_i, tau_w)
/// with s = sqrt(sum_j w_j sigma_j^2 / b_j) and tau_w its budget threshold.
class GlobalDual {
public:
    GlobalDual(const EmpiricalBound& bound, Budget budget, Vector scale);

    double value(const Vector& w) const;
    Vector score_coef(const Vector& w) const;
    Vector rho(const Vector& w, Threshold* threshold = nullptr) const;
    Threshold threshold(const Vector& w) const;

private:
    std::vector<double> combined_sigma(const Vector& w) const;

    const EmpiricalBound& bound_;
    Budget budget_;
    Vector b_;  // scaled b
    mutable std::map<std::vector<long long>, Threshold> cache_;
};

/// Minimises the dual over the simplex and returns the truncated rule it
/// induces. The objective reported is the achieved min_j f_j.
MaximinSolution solve_global_maximin(const EmpiricalBound& bound, const Budget& budget,
                                     const MaximinOptions& options = {});

/// Priority weights a (positive, summing to one): the global problem with
/// b_j replaced by a_j b_j. The objective reported is min_j f_j / a_j.
MaximinSolution solve_priority_maximin(const EmpiricalBound& bound, const Budget& budget, const Vector& a,
                                       const MaximinOptions& options = {});

// ---------------------------------------------------------------------------
// Brute-force primal oracle on a finite support.

struct DiscreteLaw {
    Vector prob;   // k support probabilities
    Matrix sigma;  // k x d
    Matrix pi;     // k x d
};

struct BruteForceResult {
    Vector rho;
    double value = 0.0;
    Improvement improvement;
};

/// Searches rules on the grid {step, 2 step, ..., 1} for all but the last
/// support point; the last point takes the largest value the budget
/// sum_i prob_i rho_i <= varpi allows. Each refinement level repeats the search
/// on a grid ten times finer around the incumbent.
BruteForceResult primal_brute_force(const DiscreteLaw& law, const Vector& rho0, double varpi, double step,
                                    int refine_levels = 0);

} // namespace twophase
