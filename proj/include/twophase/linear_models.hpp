#pragma once

#include "twophase/types.hpp"

namespace twophase {

/// Least-squares coefficients B minimising ||Y - X B||_F. Throws NumericalError
/// when X does not have full column rank.
Matrix least_squares(const Matrix& X, const Matrix& Y, const std::string& what);

/// Multinomial logistic regression with arm 0 as the reference category.
/// `labels` take values 0..arms-1. Returns (arms-1) x p coefficients; the
/// binary model is the arms == 2 case. Fitted by Newton-Raphson.
Matrix fit_multinomial_logit(const Matrix& X, const std::vector<int>& labels, int arms);

/// Arm probabilities at covariate vector x (length p) under `coef`.
Vector multinomial_probs(const Matrix& coef, const Eigen::Ref<const Vector>& x);

} // namespace twophase
