#pragma once

// Joint sieve estimation of the conditional mean and conditional standard
// deviation of an influence-function component given the first-phase
// variables. Both are linear in a second-order polynomial basis; the standard
// deviation goes through a softplus link.

#include "twophase/types.hpp"

#include <memory>
#include <vector>

namespace twophase {

double softplus(double x);
double softplus_inverse(double s);
/// First derivative of softplus (the logistic function).
double softplus_d1(double x);
double softplus_d2(double x);

/// Min-max normalisation of each first-phase column followed by the
/// expansion 1, u_k, u_k^2, u_k u_l (k < l).
struct BasisSpec {
    Vector lo;
    Vector hi;
    std::vector<bool> constant_column;

    int input_dim() const { return static_cast<int>(lo.size()); }
    int terms() const;
    /// Expansion at a first-phase row; normalised values are clipped to [0,1].
    Vector expand(Row v) const;
    Matrix design(const RowMatrix& V) const;
};

int basis_terms(int dim_v);
BasisSpec build_basis(const RowMatrix& V_pilot);

double default_ridge(int dim_v);

/// (1/m) sum [(psi - P g1)^2 / L(P g2) + L(P g2)] + ridge (|g1|^2 + |g2|^2)
double joint_loss(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P, double ridge);
Vector joint_loss_grad_gamma1(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                              double ridge);
Vector joint_loss_grad_gamma2(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                              double ridge);
Matrix joint_loss_hessian_gamma2(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                                 double ridge);

/// Closed-form minimiser of the loss over gamma1 with gamma2 held fixed.
Vector gamma1_block_update(const Vector& gamma2, const Vector& psi, const Matrix& P, double ridge);

struct MomentModel {
    Vector gamma1;
    Vector gamma2;

    double mean(const Vector& p) const { return gamma1.dot(p); }
    double sd(const Vector& p) const { return softplus(gamma2.dot(p)); }
};

struct MomentFitOptions {
    double ridge = -1.0;  // negative selects default_ridge(dim_v)
    int max_iter = 200;
    double tol = 1e-9;
};

struct MomentFit {
    MomentModel model;
    std::vector<double> loss_history;  // initial loss, then one entry per block update
    int iterations = 0;
    bool converged = false;
};

/// Block coordinate descent on the joint loss for one component.
MomentFit fit_moments(const Vector& psi, const Matrix& P, double ridge, int max_iter = 200, double tol = 1e-9);

/// Fitted moment models for all components, sharing one basis.
class MomentModels {
public:
    MomentModels(BasisSpec basis, std::vector<MomentModel> models);

    const BasisSpec& basis() const { return basis_; }
    const std::vector<MomentModel>& models() const { return models_; }
    int size() const { return static_cast<int>(models_.size()); }

    Vector mean_at(Row v) const;
    Vector sd_at(Row v) const;
    /// n x d tables over all rows of V.
    Matrix mean_table(const RowMatrix& V) const;
    Matrix sd_table(const RowMatrix& V) const;

private:
    BasisSpec basis_;
    std::vector<MomentModel> models_;
};

/// Fits one model per column of `psi` (m x d) on the pilot first-phase rows.
/// The per-component loss histories are written to `histories` when given.
std::shared_ptr<const MomentModels> fit_moment_models(const Matrix& psi, const RowMatrix& V_pilot,
                                                      const MomentFitOptions& options = {},
                                                      std::vector<std::vector<double>>* histories = nullptr);

} // namespace twophase
