#include "twophase/moments.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace twophase;

namespace {

struct Problem {
    Vector psi;
    Matrix P;
};

Problem random_problem(std::mt19937_64& rng, Eigen::Index m, int dim_v)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    RowMatrix V(m, dim_v);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (int k = 0; k < dim_v; ++k) V(i, k) = u(rng);
    }
    Problem p{Vector(m), build_basis(V).design(V)};
    for (Eigen::Index i = 0; i < m; ++i) p.psi(i) = V(i, 0) + (0.5 + std::abs(V(i, 0))) * g(rng);
    return p;
}

Vector random_vector(std::mt19937_64& rng, Eigen::Index k, double scale)
{
    std::normal_distribution<double> g(0.0, scale);
    Vector v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = g(rng);
    return v;
}

double relative_error(const Vector& a, const Vector& b)
{
    return (a - b).norm() / std::max(1.0, b.norm());
}

} // namespace

TEST_CASE("basis size")
{
    CHECK(basis_terms(1) == 3);
    CHECK(basis_terms(2) == 6);
    CHECK(basis_terms(3) == 10);

    RowMatrix V(3, 2);
    V << 0.0, 5.0, 1.0, 5.0, 2.0, 5.0;
    const BasisSpec b = build_basis(V);
    CHECK(b.terms() == 6);
    const Vector p = b.expand(std::vector<double>{1.0, 5.0});
    CHECK(p(0) == 1.0);
    CHECK(p(1) == doctest::Approx(0.5));
    CHECK(p(3) == doctest::Approx(0.25));
    // values outside the pilot range are clipped
    const Vector far = b.expand(std::vector<double>{10.0, 5.0});
    CHECK(far(1) == 1.0);
}

TEST_CASE("softplus helpers")
{
    for (double x : {-40.0, -3.0, 0.0, 0.7, 12.0, 45.0}) {
        CHECK(softplus_inverse(softplus(x)) == doctest::Approx(x).epsilon(1e-9));
        const double h = 1e-5;
        CHECK(softplus_d1(x) == doctest::Approx((softplus(x + h) - softplus(x - h)) / (2 * h)).epsilon(1e-6));
    }
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("analytic gradients match finite differences")
{
    std::mt19937_64 rng(31);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        const Problem p = random_problem(rng, 40, 1 + trial % 3);
        const Eigen::Index K = p.P.cols();
        const Vector g1 = random_vector(rng, K, 1.0);
        const Vector g2 = random_vector(rng, K, 1.0);
        const double ridge = 0.05;
        Vector fd1(K), fd2(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            Vector e = Vector::Zero(K);
            e(k) = h;
            fd1(k) = (joint_loss(g1 + e, g2, p.psi, p.P, ridge) - joint_loss(g1 - e, g2, p.psi, p.P, ridge)) / (2 * h);
            fd2(k) = (joint_loss(g1, g2 + e, p.psi, p.P, ridge) - joint_loss(g1, g2 - e, p.psi, p.P, ridge)) / (2 * h);
        }
        CAPTURE(trial);
        CHECK(relative_error(joint_loss_grad_gamma1(g1, g2, p.psi, p.P, ridge), fd1) <= 1e-5);
        CHECK(relative_error(joint_loss_grad_gamma2(g1, g2, p.psi, p.P, ridge), fd2) <= 1e-5);
    }
}

TEST_CASE("hessian in the scale block matches differenced gradients")
{
    std::mt19937_64 rng(41);
    const Problem p = random_problem(rng, 60, 2);
    const Eigen::Index K = p.P.cols();
    const Vector g1 = random_vector(rng, K, 0.5);
    const Vector g2 = random_vector(rng, K, 0.5);
    const Matrix H = joint_loss_hessian_gamma2(g1, g2, p.psi, p.P, 0.1);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < K; ++k) {
        Vector e = Vector::Zero(K);
        e(k) = h;
        const Vector col = (joint_loss_grad_gamma2(g1, g2 + e, p.psi, p.P, 0.1) -
                            joint_loss_grad_gamma2(g1, g2 - e, p.psi, p.P, 0.1)) /
                           (2 * h);
        CHECK(relative_error(H.col(k), col) <= 1e-5);
    }
}

TEST_CASE("joint loss is midpoint convex in each block")
{
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        const Problem p = random_problem(rng, 30, 1 + trial % 2);
        const Eigen::Index K = p.P.cols();
        const Vector a1 = random_vector(rng, K, 2.0), a2 = random_vector(rng, K, 2.0);
        Vector b1 = random_vector(rng, K, 2.0), b2 = random_vector(rng, K, 2.0);
        // even trials move the mean block, odd trials the scale block
        if (trial % 2 == 0) {
            b2 = a2;
        } else {
            b1 = a1;
        }
        const double ridge = trial % 4 < 2 ? 0.0 : 0.1;
        const double fa = joint_loss(a1, a2, p.psi, p.P, ridge);
        const double fb = joint_loss(b1, b2, p.psi, p.P, ridge);
        const double fm = joint_loss((a1 + b1) / 2, (a2 + b2) / 2, p.psi, p.P, ridge);
        CAPTURE(trial);
        CHECK(fm <= (fa + fb) / 2 + 1e-12 * (1.0 + std::abs(fa) + std::abs(fb)));
    }
}

TEST_CASE("hessian in the scale block is positive semidefinite")
{
    std::mt19937_64 rng(57);
    for (int trial = 0; trial < 20; ++trial) {
        const Problem p = random_problem(rng, 50, 1 + trial % 3);
        const Eigen::Index K = p.P.cols();
        const Matrix H =
            joint_loss_hessian_gamma2(random_vector(rng, K, 1.0), random_vector(rng, K, 1.0), p.psi, p.P, 0.0);
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, eig.eigenvalues().maxCoeff()));
    }
}

TEST_CASE("closed-form mean block is the block minimiser")
{
    std::mt19937_64 rng(61);
    const Problem p = random_problem(rng, 80, 2);
    const Eigen::Index K = p.P.cols();
    const Vector g2 = random_vector(rng, K, 0.5);
    const Vector g1 = gamma1_block_update(g2, p.psi, p.P, 0.1);
    CHECK(joint_loss_grad_gamma1(g1, g2, p.psi, p.P, 0.1).norm() <= 1e-10);
    const double best = joint_loss(g1, g2, p.psi, p.P, 0.1);
    for (int k = 0; k < 20; ++k) {
        CHECK(joint_loss(g1 + random_vector(rng, K, 0.1), g2, p.psi, p.P, 0.1) >= best);
    }
}

TEST_CASE("block descent never increases the loss")
{
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        const Problem p = random_problem(rng, 200, 1 + trial % 3);
        const MomentFit fit = fit_moments(p.psi, p.P, trial % 2 == 0 ? 0.4 : 1e-3);
        REQUIRE(fit.loss_history.size() >= 2);
        for (std::size_t k = 1; k < fit.loss_history.size(); ++k) {
            CHECK(fit.loss_history[k] <= fit.loss_history[k - 1]);
        }
        CHECK(fit.converged);
    }
}

TEST_CASE("recovery of known conditional moments")
{
    std::mt19937_64 rng(83);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);

    SUBCASE("homoscedastic")
    {
        RowMatrix V(5000, 1);
        Matrix psi(5000, 1);
        for (Eigen::Index i = 0; i < V.rows(); ++i) {
            V(i, 0) = u(rng);
            psi(i, 0) = g(rng);
        }
        MomentFitOptions opt;
        opt.ridge = 1e-4;
        const auto models = fit_moment_models(psi, V, opt);
        for (double v : {-0.9, -0.3, 0.0, 0.5, 0.9}) {
            const std::vector<double> row{v};
            CHECK(models->sd_at(row)(0) == doctest::Approx(1.0).epsilon(0.1));
            CHECK(std::abs(models->mean_at(row)(0)) <= 0.1);
        }
    }
    SUBCASE("heteroscedastic")
    {
        RowMatrix V(20000, 1);
        Matrix psi(20000, 1);
        for (Eigen::Index i = 0; i < V.rows(); ++i) {
            V(i, 0) = u(rng);
            psi(i, 0) = 2.0 * V(i, 0) + (1.0 + V(i, 0) * V(i, 0)) * g(rng);
        }
        MomentFitOptions opt;
        opt.ridge = 1e-5;
        const auto models = fit_moment_models(psi, V, opt);
        for (double v : {-0.8, 0.0, 0.8}) {
            const std::vector<double> row{v};
            CHECK(models->mean_at(row)(0) == doctest::Approx(2.0 * v).epsilon(0.1));
            CHECK(models->sd_at(row)(0) == doctest::Approx(1.0 + v * v).epsilon(0.1));
        }
    }
}

TEST_CASE("default ridge and degenerate inputs")
{
    CHECK(default_ridge(1) == doctest::Approx(0.2));
    CHECK(default_ridge(3) == doctest::Approx(0.4));

    // a constant psi: the mean is recovered and the scale is driven down
    RowMatrix V(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) V(i, 0) = i;
    const Matrix psi = Matrix::Constant(100, 1, 5.0);
    MomentFitOptions opt;
    opt.ridge = 1e-3;
    const auto models = fit_moment_models(psi, V, opt);
    const std::vector<double> row{50.0};
    CHECK(models->mean_at(row)(0) == doctest::Approx(5.0).epsilon(0.01));
    CHECK(models->sd_at(row)(0) < 0.1);

    CHECK_THROWS_AS(fit_moments(Vector::Zero(3), Matrix::Ones(3, 1), -1.0), InvalidInput);
}
