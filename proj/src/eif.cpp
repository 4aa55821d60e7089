#include "twophase/eif.hpp"

#include "twophase/linear_models.hpp"

#include <Eigen/LU>

#include <cmath>

namespace twophase {

std::string to_string(ProblemKind kind)
{
    switch (kind) {
    case ProblemKind::Mean: return "mean";
    case ProblemKind::MultiMean: return "multi_mean";
    case ProblemKind::LinearCoef: return "linear";
    case ProblemKind::AteBinary: return "ate";
    case ProblemKind::AteMulti: return "ate_multi";
    case ProblemKind::ClassificationTriple: return "classification";
    }
    return "unknown";
}

Vector AteNuisance::arm_probs(const Vector& w) const
{
    if (known_propensity) return known_probs;
    return multinomial_probs(propensity_coef, w);
}

double AteNuisance::outcome(int arm, const Vector& w) const
{
    return outcome_coef.row(arm).dot(w);
}

Vector psi_mean(Row u, const Vector& theta)
{
    require(static_cast<Eigen::Index>(u.size()) == theta.size(), "psi_mean: dimension mismatch");
    Vector out(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) out(j) = u[j] - theta(j);
    return out;
}

namespace {

Vector with_intercept(Row z)
{
    Vector zt(static_cast<Eigen::Index>(z.size()) + 1);
    zt(0) = 1.0;
    for (std::size_t k = 0; k < z.size(); ++k) zt(static_cast<Eigen::Index>(k) + 1) = z[k];
    return zt;
}

Vector as_vector(Row r)
{
    return Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
}

} // namespace

Vector psi_linear(double y, Row z, Row x, const Vector& theta, const LinearNuisance& eta)
{
    const Vector xv = as_vector(x);
    const Vector zt = with_intercept(z);
    require(xv.size() == theta.size(), "psi_linear: x and theta differ in length");
    require(eta.alpha.rows() == xv.size() && eta.alpha.cols() == zt.size(), "psi_linear: alpha has wrong shape");
    require(eta.beta.size() == zt.size(), "psi_linear: beta has wrong length");
    const Vector resid_x = xv - eta.alpha * zt;
    const double resid_y = y - xv.dot(theta) - zt.dot(eta.beta);
    return eta.norm_inv * resid_x * resid_y;
}

double psi_ate_binary(double y, double t, double pi, double m0, double m1, double theta)
{
    if (!(pi > 0.0 && pi < 1.0)) throw InvalidInput("psi_ate_binary: propensity outside (0,1)");
    const double q = 1.0 - pi;
    return t * y / pi - (1.0 - t) * y / q - (t / pi - 1.0) * m1 + ((1.0 - t) / q - 1.0) * m0 - theta;
}

Vector psi_ate_multi(double y, int t, std::span<const double> probs, std::span<const double> m,
                     const Vector& theta)
{
    const auto arms = static_cast<Eigen::Index>(probs.size());
    require(arms == theta.size() + 1, "psi_ate_multi: need one more arm probability than parameters");
    require(static_cast<Eigen::Index>(m.size()) == arms, "psi_ate_multi: need one regression per arm");
    for (double p : probs) {
        if (!(p > 0.0)) throw InvalidInput("psi_ate_multi: zero arm probability");
    }
    const double t0 = t == 0 ? 1.0 : 0.0;
    Vector out(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double tj = t == j + 1 ? 1.0 : 0.0;
        const double pj = probs[static_cast<std::size_t>(j + 1)];
        const double p0 = probs[0];
        out(j) = tj * y / pj - t0 * y / p0 - (tj / pj - 1.0) * m[static_cast<std::size_t>(j + 1)] +
                 (t0 / p0 - 1.0) * m[0] - theta(j);
    }
    return out;
}

Vector psi_classification(double x, double y, const Vector& theta)
{
    require(theta.size() == 3, "psi_classification: theta must have length 3");
    if (!(theta(0) > 0.0 && theta(0) < 1.0)) throw InvalidInput("psi_classification: prevalence must lie in (0,1)");
    Vector out(3);
    out(0) = y - theta(0);
    out(1) = (x - theta(1)) * y / theta(0);
    out(2) = (1.0 - x - theta(2)) * (1.0 - y) / (1.0 - theta(0));
    return out;
}

Vector two_phase_eif(const Vector& psi, const Vector& pi_v, double rho_v, bool r)
{
    require(psi.size() == pi_v.size(), "two_phase_eif: psi and pi differ in length");
    if (!(rho_v > 0.0) || rho_v > 1.0) throw InvalidInput("two_phase_eif: rho must lie in (0,1]");
    if (!r) return pi_v;
    return psi / rho_v - (1.0 / rho_v - 1.0) * pi_v;
}

// ---------------------------------------------------------------------------

EstimationProblem EstimationProblem::mean(int dim_y, int dim_z)
{
    require(dim_y >= 1 && dim_z >= 1, "mean problem: need at least one outcome and one first-phase variable");
    return {dim_y == 1 ? ProblemKind::Mean : ProblemKind::MultiMean, dim_y, dim_z, dim_y};
}

EstimationProblem EstimationProblem::linear_coef(int dim_x, int dim_z)
{
    require(dim_x >= 1 && dim_z >= 0, "linear problem: need at least one covariate");
    return {ProblemKind::LinearCoef, dim_x, 1 + dim_z, dim_x};
}

EstimationProblem EstimationProblem::ate_binary(int dim_x, int dim_z, std::optional<double> known_propensity)
{
    require(dim_x >= 1 && dim_z >= 0, "ate problem: need at least one second-phase confounder");
    EstimationProblem p(ProblemKind::AteBinary, 1, 2 + dim_z, dim_x);
    if (known_propensity) {
        const double pi = *known_propensity;
        require(pi > 0.0 && pi < 1.0, "ate problem: known propensity must lie in (0,1)");
        Vector probs(2);
        probs << 1.0 - pi, pi;
        p.known_probs_ = probs;
    }
    return p;
}

EstimationProblem EstimationProblem::ate_multi(int treatments, int dim_x, int dim_z, std::optional<Vector> known_probs)
{
    require(treatments >= 1, "ate_multi problem: need at least one treatment arm");
    require(dim_x >= 1 && dim_z >= 0, "ate_multi problem: need at least one second-phase confounder");
    EstimationProblem p(ProblemKind::AteMulti, treatments, 2 + dim_z, dim_x);
    if (known_probs) {
        require(known_probs->size() == treatments + 1, "ate_multi problem: known probabilities need one entry per arm");
        require((known_probs->array() > 0.0).all(), "ate_multi problem: known probabilities must be positive");
        require(std::abs(known_probs->sum() - 1.0) < 1e-9, "ate_multi problem: known probabilities must sum to 1");
        p.known_probs_ = *known_probs;
    }
    return p;
}

EstimationProblem EstimationProblem::classification()
{
    return {ProblemKind::ClassificationTriple, 3, 1, 1};
}

void EstimationProblem::check_row(Row v, Row u) const
{
    require(static_cast<int>(v.size()) == v_dim_, name() + ": first-phase row has wrong width");
    require(static_cast<int>(u.size()) == u_dim_, name() + ": second-phase row has wrong width");
}

Vector EstimationProblem::ate_covariates(Row v, Row u) const
{
    // w = (1, x, z) with z = v[2..]
    const int dz = v_dim_ - 2;
    Vector w(1 + u_dim_ + dz);
    w(0) = 1.0;
    for (int k = 0; k < u_dim_; ++k) w(1 + k) = u[static_cast<std::size_t>(k)];
    for (int k = 0; k < dz; ++k) w(1 + u_dim_ + k) = v[static_cast<std::size_t>(2 + k)];
    return w;
}

namespace {

int arm_label(double t, int arms)
{
    const double r = std::round(t);
    if (std::abs(t - r) > 1e-9 || r < 0 || r >= arms) {
        throw InvalidInput("treatment indicator must be an integer in [0, " + std::to_string(arms - 1) + "]");
    }
    return static_cast<int>(r);
}

} // namespace

NuisanceParams EstimationProblem::fit_nuisance(const RowMatrix& Vp, const RowMatrix& Up) const
{
    require(Vp.rows() == Up.rows(), name() + ": pilot tables differ in row count");
    require(Vp.rows() > 0, name() + ": empty pilot sample");
    require(Vp.cols() == v_dim_ && Up.cols() == u_dim_, name() + ": pilot tables have wrong widths");
    const Eigen::Index m = Vp.rows();

    switch (kind_) {
    case ProblemKind::Mean:
    case ProblemKind::MultiMean:
    case ProblemKind::ClassificationTriple:
        return std::monostate{};

    case ProblemKind::LinearCoef: {
        const int dz = v_dim_ - 1;
        Matrix Zt(m, 1 + dz);
        Zt.col(0).setOnes();
        Zt.rightCols(dz) = Vp.rightCols(dz);
        const Matrix X = Up;
        LinearNuisance eta;
        eta.alpha = least_squares(Zt, X, "linear nuisance (X on Z)").transpose();
        Matrix joint(m, u_dim_ + 1 + dz);
        joint.leftCols(u_dim_) = X;
        joint.rightCols(1 + dz) = Zt;
        const Matrix coef = least_squares(joint, Vp.col(0), "linear nuisance (Y on X, Z)");
        eta.beta = coef.col(0).tail(1 + dz);
        const Matrix resid = X - Zt * eta.alpha.transpose();
        const Matrix norm = resid.transpose() * resid / static_cast<double>(m);
        Eigen::FullPivLU<Matrix> lu(norm);
        if (!lu.isInvertible() || lu.rcond() < 1e-12) {
            throw NumericalError("linear nuisance: singular normalizing matrix");
        }
        eta.norm_inv = lu.inverse();
        return eta;
    }

    case ProblemKind::AteBinary:
    case ProblemKind::AteMulti: {
        const int arms = param_dim_ + 1;
        const int p = 1 + u_dim_ + (v_dim_ - 2);
        Matrix W(m, p);
        std::vector<int> labels(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) {
            W.row(i) = ate_covariates(row_of(Vp, i), row_of(Up, i)).transpose();
            labels[static_cast<std::size_t>(i)] = arm_label(Vp(i, 1), arms);
        }
        AteNuisance eta;
        eta.arms = arms;
        if (known_probs_) {
            eta.known_propensity = true;
            eta.known_probs = *known_probs_;
        } else {
            eta.propensity_coef = fit_multinomial_logit(W, labels, arms);
        }
        eta.outcome_coef.resize(arms, p);
        for (int a = 0; a < arms; ++a) {
            std::vector<Eigen::Index> rows;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (labels[static_cast<std::size_t>(i)] == a) rows.push_back(i);
            }
            if (rows.empty()) throw NumericalError(name() + " nuisance: empty arm " + std::to_string(a) + " in pilot");
            Matrix Wa(static_cast<Eigen::Index>(rows.size()), p);
            Vector ya(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) {
                Wa.row(static_cast<Eigen::Index>(k)) = W.row(rows[k]);
                ya(static_cast<Eigen::Index>(k)) = Vp(rows[k], 0);
            }
            eta.outcome_coef.row(a) =
                least_squares(Wa, ya, "outcome regression for arm " + std::to_string(a)).col(0).transpose();
        }
        return eta;
    }
    }
    throw InvalidInput("unknown problem kind");
}

Vector EstimationProblem::psi(Row v, Row u, const Vector& theta, const NuisanceParams& eta) const
{
    check_row(v, u);
    require(theta.size() == param_dim_, name() + ": theta has wrong length");
    switch (kind_) {
    case ProblemKind::Mean:
    case ProblemKind::MultiMean:
        return psi_mean(u, theta);
    case ProblemKind::ClassificationTriple:
        return psi_classification(v[0], u[0], theta);
    case ProblemKind::LinearCoef:
        return psi_linear(v[0], v.subspan(1), u, theta, std::get<LinearNuisance>(eta));
    case ProblemKind::AteBinary:
    case ProblemKind::AteMulti: {
        const auto& ate = std::get<AteNuisance>(eta);
        const Vector w = ate_covariates(v, u);
        const Vector probs = ate.arm_probs(w);
        const int arms = param_dim_ + 1;
        Vector m(arms);
        for (int a = 0; a < arms; ++a) m(a) = ate.outcome(a, w);
        const int t = arm_label(v[1], arms);
        if (kind_ == ProblemKind::AteBinary) {
            Vector out(1);
            out(0) = psi_ate_binary(v[0], static_cast<double>(t), probs(1), m(0), m(1), theta(0));
            return out;
        }
        return psi_ate_multi(v[0], t, std::span<const double>(probs.data(), static_cast<std::size_t>(arms)),
                             std::span<const double>(m.data(), static_cast<std::size_t>(arms)), theta);
    }
    }
    throw InvalidInput("unknown problem kind");
}

AffineTerms EstimationProblem::affine_terms(Row v, Row u, const NuisanceParams& eta) const
{
    check_row(v, u);
    const int d = param_dim_;
    AffineTerms out{Matrix::Zero(d, d), Vector::Zero(d)};
    switch (kind_) {
    case ProblemKind::ClassificationTriple: {
        const double x = v[0];
        const double y = u[0];
        out.A(0, 0) = -1.0;
        out.c(0) = y;
        out.A(1, 1) = -y;
        out.c(1) = x * y;
        out.A(2, 2) = -(1.0 - y);
        out.c(2) = (1.0 - x) * (1.0 - y);
        return out;
    }
    case ProblemKind::LinearCoef: {
        const auto& lin = std::get<LinearNuisance>(eta);
        const Vector xv = as_vector(u);
        const Vector zt = with_intercept(v.subspan(1));
        const Vector rx = lin.norm_inv * (xv - lin.alpha * zt);
        out.A = -rx * xv.transpose();
        out.c = rx * (v[0] - zt.dot(lin.beta));
        return out;
    }
    default: {
        // psi = c - theta for the mean and treatment-effect problems
        out.A = -Matrix::Identity(d, d);
        out.c = psi(v, u, Vector::Zero(d), eta);
        return out;
    }
    }
}

Vector EstimationProblem::solve_theta(const RowMatrix& V, const RowMatrix& U, const Vector& weights,
                                      const NuisanceParams& eta) const
{
    require(V.rows() == U.rows() && V.rows() == weights.size(), name() + ": table lengths differ");
    const int d = param_dim_;
    Matrix A = Matrix::Zero(d, d);
    Vector c = Vector::Zero(d);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (weights(i) == 0.0) continue;
        const AffineTerms t = affine_terms(row_of(V, i), row_of(U, i), eta);
        A += weights(i) * t.A;
        c += weights(i) * t.c;
    }
    Eigen::FullPivLU<Matrix> lu(A);
    if (!lu.isInvertible() || lu.rcond() < 1e-13) {
        throw NumericalError(name() + ": singular estimating equation");
    }
    return lu.solve(-c);
}

Vector EstimationProblem::solve_theta_pilot(const RowMatrix& Vp, const RowMatrix& Up, const NuisanceParams& eta) const
{
    require(Vp.rows() > 0, name() + ": empty pilot sample");
    return solve_theta(Vp, Up, Vector::Ones(Vp.rows()), eta);
}

} // namespace twophase
