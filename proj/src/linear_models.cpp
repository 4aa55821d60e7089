#include "twophase/linear_models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>

namespace twophase {

Matrix least_squares(const Matrix& X, const Matrix& Y, const std::string& what)
{
    require(X.rows() == Y.rows(), what + ": row count mismatch");
    require(X.rows() >= X.cols(), what + ": fewer observations than regressors");
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        throw NumericalError(what + ": rank-deficient design (rank " + std::to_string(qr.rank()) +
                             " < " + std::to_string(X.cols()) + ")");
    }
    return qr.solve(Y);
}

Vector multinomial_probs(const Matrix& coef, const Eigen::Ref<const Vector>& x)
{
    const Eigen::Index arms = coef.rows() + 1;
    Vector eta(arms);
    eta(0) = 0.0;
    eta.tail(arms - 1) = coef * x;
    const double top = eta.maxCoeff();
    Vector p = (eta.array() - top).exp();
    return p / p.sum();
}

Matrix fit_multinomial_logit(const Matrix& X, const std::vector<int>& labels, int arms)
{
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    const Eigen::Index k = arms - 1;
    require(arms >= 2, "logit: need at least two arms");
    require(static_cast<Eigen::Index>(labels.size()) == n, "logit: label count mismatch");
    std::vector<int> counts(arms, 0);
    for (int l : labels) {
        require(l >= 0 && l < arms, "logit: label out of range");
        ++counts[l];
    }
    for (int a = 0; a < arms; ++a) {
        if (counts[a] == 0) throw NumericalError("logit: empty arm " + std::to_string(a));
    }
    {
        Eigen::ColPivHouseholderQR<Matrix> qr(X);
        qr.setThreshold(1e-10);
        if (qr.rank() < p) throw NumericalError("logit: rank-deficient design");
    }

    Matrix coef = Matrix::Zero(k, p);
    auto loglik = [&](const Matrix& c) {
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector pr = multinomial_probs(c, X.row(i).transpose());
            ll += std::log(std::max(pr(labels[i]), 1e-300));
        }
        return ll;
    };

    double ll = loglik(coef);
    for (int iter = 0; iter < 100; ++iter) {
        Vector grad = Vector::Zero(k * p);
        Matrix info = Matrix::Zero(k * p, k * p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector xi = X.row(i).transpose();
            const Vector pr = multinomial_probs(coef, xi);
            const Matrix xx = xi * xi.transpose();
            for (Eigen::Index a = 0; a < k; ++a) {
                const double ya = labels[i] == a + 1 ? 1.0 : 0.0;
                grad.segment(a * p, p) += (ya - pr(a + 1)) * xi;
                for (Eigen::Index b = 0; b < k; ++b) {
                    const double w = (a == b ? pr(a + 1) : 0.0) - pr(a + 1) * pr(b + 1);
                    info.block(a * p, b * p, p, p) += w * xx;
                }
            }
        }
        Eigen::LDLT<Matrix> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw NumericalError("logit: information matrix not positive definite (separation?)");
        }
        const Vector step = ldlt.solve(grad);
        double scale = 1.0;
        Matrix next;
        double next_ll = ll;
        for (int h = 0; h < 30; ++h) {
            next = coef;
            for (Eigen::Index a = 0; a < k; ++a) {
                next.row(a) += scale * step.segment(a * p, p).transpose();
            }
            next_ll = loglik(next);
            if (next_ll >= ll - 1e-12) break;
            scale *= 0.5;
        }
        coef = next;
        const double gain = next_ll - ll;
        ll = next_ll;
        if (step.lpNorm<Eigen::Infinity>() * scale < 1e-10 || std::abs(gain) < 1e-13) break;
        if (!coef.allFinite()) throw NumericalError("logit: non-finite coefficients");
    }
    if (coef.cwiseAbs().maxCoeff() > 30.0) {
        throw NumericalError("logit: coefficients diverging (quasi-separation)");
    }
    return coef;
}

} // namespace twophase
