#pragma once

// Catalog of estimation problems and their full-data efficient influence
// functions (EIFs), pilot-sample nuisance fitting, and the observed-data EIF
// under a two-phase design.
//
// Column conventions (first-phase V, second-phase U):
//   Mean / MultiMean       V = Z            U = Y (d outcomes)
//   LinearCoef             V = (Y, Z)       U = X (d expensive covariates)
//   AteBinary / AteMulti   V = (Y, T, Z)    U = X (expensive confounders)
//   ClassificationTriple   V = (X)          U = (Y)   (test result, disease)

#include "twophase/types.hpp"

#include <optional>
#include <string>
#include <variant>

namespace twophase {

enum class ProblemKind { Mean, MultiMean, LinearCoef, AteBinary, AteMulti, ClassificationTriple };

std::string to_string(ProblemKind kind);

/// Nuisance for the least-squares coefficient problem. Regressions include an
/// intercept: `alpha` maps (1, z) to E-linear-projection of X, `beta` holds the
/// (1, z) coefficients of the outcome model, `norm_inv` is the inverse of the
/// pilot average of (x - alpha (1,z))(x - alpha (1,z))^T.
struct LinearNuisance {
    Matrix alpha;
    Vector beta;
    Matrix norm_inv;
};

/// Nuisance for the treatment-effect problems. Covariates entering both models
/// are w = (1, x, z). Arm 0 is the control.
struct AteNuisance {
    int arms = 2;
    bool known_propensity = false;
    Vector known_probs;      // arm probabilities when the design is randomized
    Matrix propensity_coef;  // (arms-1) x p, multinomial logit, arm 0 reference
    Matrix outcome_coef;     // arms x p, per-arm linear outcome regressions

    Vector arm_probs(const Vector& w) const;
    double outcome(int arm, const Vector& w) const;
};

using NuisanceParams = std::variant<std::monostate, LinearNuisance, AteNuisance>;

// ---------------------------------------------------------------------------
// Full-data influence functions.

Vector psi_mean(Row u, const Vector& theta);

/// M^{-1} (x - alpha z~)(y - x^T theta - z~^T beta) with z~ = (1, z).
Vector psi_linear(double y, Row z, Row x, const Vector& theta, const LinearNuisance& eta);

double psi_ate_binary(double y, double t, double pi, double m0, double m1, double theta);

/// Component j (arm j vs control): the binary AIPW form with arm
/// probabilities probs[j], probs[0] and regressions m[j], m[0].
Vector psi_ate_multi(double y, int t, std::span<const double> probs, std::span<const double> m,
                     const Vector& theta);

/// Prevalence, sensitivity, specificity of a binary test x for disease y.
Vector psi_classification(double x, double y, const Vector& theta);

/// Observed-data EIF under a two-phase design: r psi / rho - (r / rho - 1) pi_v.
Vector two_phase_eif(const Vector& psi, const Vector& pi_v, double rho_v, bool r);

// ---------------------------------------------------------------------------

/// Per-unit affine representation of the estimating function: the root of
/// sum_i w_i psi_i(theta) = 0 equals the root of sum_i w_i (A_i theta + c_i) = 0.
/// For every problem except ClassificationTriple this is psi itself; for the
/// classification triple the second and third equations are multiplied by
/// theta_1 and 1 - theta_1 respectively, which leaves the root unchanged.
struct AffineTerms {
    Matrix A;
    Vector c;
};

class EstimationProblem {
public:
    static EstimationProblem mean(int dim_y, int dim_z);
    static EstimationProblem linear_coef(int dim_x, int dim_z);
    static EstimationProblem ate_binary(int dim_x, int dim_z, std::optional<double> known_propensity = {});
    /// `treatments` non-control arms; parameter j is the effect of arm j vs arm 0.
    static EstimationProblem ate_multi(int treatments, int dim_x, int dim_z,
                                       std::optional<Vector> known_probs = {});
    static EstimationProblem classification();

    ProblemKind kind() const { return kind_; }
    int param_dim() const { return param_dim_; }
    int v_dim() const { return v_dim_; }
    int u_dim() const { return u_dim_; }
    std::string name() const { return to_string(kind_); }

    /// Fits the nuisance on pilot rows (all rows of Vp/Up are pilot units).
    NuisanceParams fit_nuisance(const RowMatrix& Vp, const RowMatrix& Up) const;

    Vector psi(Row v, Row u, const Vector& theta, const NuisanceParams& eta) const;

    AffineTerms affine_terms(Row v, Row u, const NuisanceParams& eta) const;

    /// Root of sum_i weights_i psi(V_i, U_i; theta, eta) = 0 over rows with
    /// nonzero weight. Rows with zero weight are never touched (their U may be
    /// missing).
    Vector solve_theta(const RowMatrix& V, const RowMatrix& U, const Vector& weights,
                       const NuisanceParams& eta) const;

    /// Pilot estimate: unit weights on every row of the pilot tables.
    Vector solve_theta_pilot(const RowMatrix& Vp, const RowMatrix& Up, const NuisanceParams& eta) const;

private:
    EstimationProblem(ProblemKind kind, int d, int dv, int du) : kind_(kind), param_dim_(d), v_dim_(dv), u_dim_(du) {}

    void check_row(Row v, Row u) const;
    Vector ate_covariates(Row v, Row u) const;

    ProblemKind kind_;
    int param_dim_;
    int v_dim_;
    int u_dim_;
    std::optional<Vector> known_probs_;
};

} // namespace twophase
