#include "twophase/moments.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace twophase {

double softplus(double x)
{
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double softplus_inverse(double s)
{
    require(s > 0.0, "softplus_inverse: argument must be positive");
    if (s > 30.0) return s + std::log(-std::expm1(-s));
    return std::log(std::expm1(s));
}

double softplus_d1(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_d2(double x)
{
    const double s = softplus_d1(x);
    return s * (1.0 - s);
}

int basis_terms(int dim_v)
{
    return 1 + 2 * dim_v + dim_v * (dim_v - 1) / 2;
}

int BasisSpec::terms() const
{
    return basis_terms(input_dim());
}

Vector BasisSpec::expand(Row v) const
{
    const int d = input_dim();
    require(static_cast<int>(v.size()) == d, "basis: row has wrong width");
    Vector u(d);
    for (int k = 0; k < d; ++k) {
        if (constant_column[static_cast<std::size_t>(k)]) {
            u(k) = 0.5;
        } else {
            u(k) = std::clamp((v[static_cast<std::size_t>(k)] - lo(k)) / (hi(k) - lo(k)), 0.0, 1.0);
        }
    }
    Vector p(terms());
    int at = 0;
    p(at++) = 1.0;
    for (int k = 0; k < d; ++k) p(at++) = u(k);
    for (int k = 0; k < d; ++k) p(at++) = u(k) * u(k);
    for (int k = 0; k < d; ++k) {
        for (int l = k + 1; l < d; ++l) p(at++) = u(k) * u(l);
    }
    return p;
}

Matrix BasisSpec::design(const RowMatrix& V) const
{
    Matrix P(V.rows(), terms());
    for (Eigen::Index i = 0; i < V.rows(); ++i) P.row(i) = expand(row_of(V, i)).transpose();
    return P;
}

BasisSpec build_basis(const RowMatrix& V_pilot)
{
    require(V_pilot.rows() > 0, "basis: empty pilot sample");
    require(V_pilot.cols() > 0, "basis: no first-phase columns");
    BasisSpec b;
    b.lo = V_pilot.colwise().minCoeff().transpose();
    b.hi = V_pilot.colwise().maxCoeff().transpose();
    b.constant_column.resize(static_cast<std::size_t>(V_pilot.cols()));
    for (Eigen::Index k = 0; k < V_pilot.cols(); ++k) {
        b.constant_column[static_cast<std::size_t>(k)] = !(b.hi(k) > b.lo(k));
    }
    return b;
}

double default_ridge(int dim_v)
{
    return 0.1 * (dim_v + 1);
}

namespace {

void check_shapes(const Vector& g1, const Vector& g2, const Vector& psi, const Matrix& P)
{
    require(P.rows() == psi.size(), "joint loss: basis rows and psi differ in length");
    require(g1.size() == P.cols() && g2.size() == P.cols(), "joint loss: coefficient length differs from basis size");
}

} // namespace

double joint_loss(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P, double ridge)
{
    check_shapes(gamma1, gamma2, psi, P);
    const Vector mu = P * gamma1;
    const Vector eta = P * gamma2;
    double total = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const double L = softplus(eta(i));
        const double r = psi(i) - mu(i);
        total += r * r / L + L;
    }
    const double value = total / static_cast<double>(psi.size()) + ridge * (gamma1.squaredNorm() + gamma2.squaredNorm());
    if (!std::isfinite(value)) throw NumericalError("joint loss: non-finite value");
    return value;
}

Vector joint_loss_grad_gamma1(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                              double ridge)
{
    check_shapes(gamma1, gamma2, psi, P);
    const Vector mu = P * gamma1;
    const Vector eta = P * gamma2;
    Vector coef(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) coef(i) = -2.0 * (psi(i) - mu(i)) / softplus(eta(i));
    return P.transpose() * coef / static_cast<double>(psi.size()) + 2.0 * ridge * gamma1;
}

Vector joint_loss_grad_gamma2(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                              double ridge)
{
    check_shapes(gamma1, gamma2, psi, P);
    const Vector mu = P * gamma1;
    const Vector eta = P * gamma2;
    Vector coef(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const double L = softplus(eta(i));
        const double r = psi(i) - mu(i);
        coef(i) = (1.0 - r * r / (L * L)) * softplus_d1(eta(i));
    }
    return P.transpose() * coef / static_cast<double>(psi.size()) + 2.0 * ridge * gamma2;
}

Matrix joint_loss_hessian_gamma2(const Vector& gamma1, const Vector& gamma2, const Vector& psi, const Matrix& P,
                                 double ridge)
{
    check_shapes(gamma1, gamma2, psi, P);
    const Vector mu = P * gamma1;
    const Vector eta = P * gamma2;
    Vector w(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const double L = softplus(eta(i));
        const double d1 = softplus_d1(eta(i));
        const double d2 = softplus_d2(eta(i));
        const double r2 = (psi(i) - mu(i)) * (psi(i) - mu(i));
        w(i) = r2 * (2.0 * d1 * d1 / (L * L * L) - d2 / (L * L)) + d2;
    }
    const Eigen::Index K = P.cols();
    return P.transpose() * w.asDiagonal() * P / static_cast<double>(psi.size()) +
           2.0 * ridge * Matrix::Identity(K, K);
}

Vector gamma1_block_update(const Vector& gamma2, const Vector& psi, const Matrix& P, double ridge)
{
    const auto m = static_cast<double>(psi.size());
    const Eigen::Index K = P.cols();
    const Vector eta = P * gamma2;
    Vector w(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) w(i) = 1.0 / softplus(eta(i));
    const Matrix lhs = P.transpose() * w.asDiagonal() * P / m + ridge * Matrix::Identity(K, K);
    const Vector rhs = P.transpose() * w.cwiseProduct(psi) / m;
    Eigen::LDLT<Matrix> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) throw NumericalError("moment fit: weighted least squares failed");
    return ldlt.solve(rhs);
}

namespace {

// One descent step on gamma2: damped Newton, then gradient descent if Newton
// cannot lower the loss. Never returns a point with a larger loss.
double gamma2_block_update(const Vector& gamma1, Vector& gamma2, const Vector& psi, const Matrix& P, double ridge,
                           double current)
{
    const Vector g = joint_loss_grad_gamma2(gamma1, gamma2, psi, P, ridge);
    const Matrix H = joint_loss_hessian_gamma2(gamma1, gamma2, psi, P, ridge);

    auto backtrack = [&](const Vector& dir, double slope) -> bool {
        double step = 1.0;
        for (int h = 0; h < 50; ++h) {
            const Vector trial = gamma2 + step * dir;
            const double val = joint_loss(gamma1, trial, psi, P, ridge);
            if (val <= current + 1e-4 * step * slope) {
                if (val <= current) {
                    gamma2 = trial;
                    current = val;
                    return true;
                }
            }
            step *= 0.5;
        }
        return false;
    };

    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Vector dir = -ldlt.solve(g);
        const double slope = g.dot(dir);
        if (dir.allFinite() && slope < 0.0 && backtrack(dir, slope)) return current;
    }
    const Vector dir = -g;
    backtrack(dir, -g.squaredNorm());
    return current;
}

} // namespace

MomentFit fit_moments(const Vector& psi, const Matrix& P, double ridge, int max_iter, double tol)
{
    require(psi.size() == P.rows(), "moment fit: psi and basis differ in length");
    require(psi.size() > 0, "moment fit: empty pilot sample");
    require(ridge >= 0.0, "moment fit: ridge must be nonnegative");
    const auto m = static_cast<double>(psi.size());
    const Eigen::Index K = P.cols();

    MomentFit fit;
    Vector gamma2 = Vector::Zero(K);
    Vector gamma1;
    {
        const Matrix lhs = P.transpose() * P / m + ridge * Matrix::Identity(K, K);
        Eigen::LDLT<Matrix> ldlt(lhs);
        gamma1 = ldlt.solve(P.transpose() * psi / m);
        const Vector resid = psi - P * gamma1;
        const double centred = resid.size() > 1
                                   ? std::sqrt((resid.array() - resid.mean()).square().sum() / (m - 1.0))
                                   : std::abs(resid(0));
        gamma2(0) = softplus_inverse(std::max(centred, 1e-8));
    }

    double loss = joint_loss(gamma1, gamma2, psi, P, ridge);
    fit.loss_history.push_back(loss);
    for (int it = 0; it < max_iter; ++it) {
        const double before = loss;
        const Vector g1 = gamma1_block_update(gamma2, psi, P, ridge);
        const double after1 = joint_loss(g1, gamma2, psi, P, ridge);
        // The closed form is the exact block minimiser; guard against round-off.
        if (after1 <= loss) {
            gamma1 = g1;
            loss = after1;
        }
        fit.loss_history.push_back(loss);
        loss = gamma2_block_update(gamma1, gamma2, psi, P, ridge, loss);
        fit.loss_history.push_back(loss);
        fit.iterations = it + 1;
        if (!std::isfinite(loss)) throw NumericalError("moment fit: non-finite loss");
        if (before - loss < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.model = MomentModel{gamma1, gamma2};
    return fit;
}

MomentModels::MomentModels(BasisSpec basis, std::vector<MomentModel> models)
    : basis_(std::move(basis)), models_(std::move(models))
{
    for (const auto& m : models_) {
        require(m.gamma1.size() == basis_.terms() && m.gamma2.size() == basis_.terms(),
                "moment models: coefficient length differs from basis size");
    }
}

Vector MomentModels::mean_at(Row v) const
{
    const Vector p = basis_.expand(v);
    Vector out(size());
    for (int j = 0; j < size(); ++j) out(j) = models_[static_cast<std::size_t>(j)].mean(p);
    return out;
}

Vector MomentModels::sd_at(Row v) const
{
    const Vector p = basis_.expand(v);
    Vector out(size());
    for (int j = 0; j < size(); ++j) out(j) = models_[static_cast<std::size_t>(j)].sd(p);
    return out;
}

Matrix MomentModels::mean_table(const RowMatrix& V) const
{
    Matrix out(V.rows(), size());
    for (Eigen::Index i = 0; i < V.rows(); ++i) out.row(i) = mean_at(row_of(V, i)).transpose();
    return out;
}

Matrix MomentModels::sd_table(const RowMatrix& V) const
{
    Matrix out(V.rows(), size());
    for (Eigen::Index i = 0; i < V.rows(); ++i) out.row(i) = sd_at(row_of(V, i)).transpose();
    return out;
}

std::shared_ptr<const MomentModels> fit_moment_models(const Matrix& psi, const RowMatrix& V_pilot,
                                                      const MomentFitOptions& options,
                                                      std::vector<std::vector<double>>* histories)
{
    require(psi.rows() == V_pilot.rows(), "moment fit: psi and pilot rows differ");
    BasisSpec basis = build_basis(V_pilot);
    const Matrix P = basis.design(V_pilot);
    const double ridge = options.ridge < 0.0 ? default_ridge(basis.input_dim()) : options.ridge;
    std::vector<MomentModel> models;
    if (histories) histories->clear();
    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
        MomentFit fit = fit_moments(psi.col(j), P, ridge, options.max_iter, options.tol);
        models.push_back(fit.model);
        if (histories) histories->push_back(std::move(fit.loss_history));
    }
    return std::make_shared<const MomentModels>(std::move(basis), std::move(models));
}

} // namespace twophase
