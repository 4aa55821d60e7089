#include "oracles.hpp"

#include "twophase/classification.hpp"
#include "twophase/maximin.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace twophase;

namespace {

const Vector kTheta = (Vector(3) << 0.2, 0.8, 0.6).finished();

Vector truncated_on(const Vector& lambda, const Vector& weight, double target)
{
    const std::span<const double> s(lambda.data(), static_cast<std::size_t>(lambda.size()));
    return truncated_values(s, solve_threshold(s, std::span<const double>(weight.data(), s.size()), target));
}

// Heteroscedastic two-component instance on m equally weighted points.
EmpiricalBound random_instance(std::mt19937_64& rng, Eigen::Index m, double varpi, Matrix* sigma_out = nullptr)
{
    std::uniform_real_distribution<double> u(0.1, 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix sigma(m, 2), pi(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        sigma(i, 0) = u(rng);
        sigma(i, 1) = u(rng);
        pi(i, 0) = g(rng);
        pi(i, 1) = g(rng);
    }
    if (sigma_out) *sigma_out = sigma;
    return empirical_bound(sigma, pi, Vector::Constant(m, varpi), Vector::Constant(m, 1.0 / m));
}

} // namespace

TEST_CASE("relative improvement at the benchmark and above it")
{
    std::mt19937_64 rng(3);
    const EmpiricalBound b = random_instance(rng, 20, 0.3);
    const Improvement at0 = relative_improvement(b, b.rho0);
    CHECK(at0.components.cwiseAbs().maxCoeff() <= 1e-15);
    Vector rho = b.rho0;
    rho(4) = 0.6;
    CHECK(relative_improvement(b, rho).min > 0.0);
}

TEST_CASE("single component reductions")
{
    std::mt19937_64 rng(7);
    const Eigen::Index m = 50;
    std::uniform_real_distribution<double> u(0.1, 3.0);
    Matrix sigma(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) sigma(i, 0) = u(rng);
    const Vector weight = Vector::Constant(m, 1.0 / m);
    const EmpiricalBound b = empirical_bound(sigma, Matrix::Zero(m, 1), Vector::Constant(m, 0.3), weight);
    const Vector sopt = truncated_on(sigma.col(0), weight, 0.3);

    const MaximinSolution c = solve_constrained_maximin(b, sopt);
    CHECK(c.w(0) == doctest::Approx(1.0));
    CHECK((c.rho - sopt).cwiseAbs().maxCoeff() <= 1e-12);
    // w = 1 beats every grid point
    for (int k = 0; k <= 100; ++k) {
        const Vector rho = b.rho0 + (k / 100.0) * (sopt - b.rho0);
        CHECK(relative_improvement(b, rho).min <= c.objective + 1e-12);
    }

    const MaximinSolution g = solve_global_maximin(b, Budget{weight, 0.3});
    CHECK((g.rho - sopt).cwiseAbs().maxCoeff() <= 1e-12);

    const MaximinSolution p = solve_priority_maximin(b, Budget{weight, 0.3}, Vector::Ones(1));
    CHECK((p.rho - sopt).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical components give a symmetric solution")
{
    std::mt19937_64 rng(9);
    Matrix sigma;
    const EmpiricalBound one = random_instance(rng, 30, 0.3, &sigma);
    Matrix twin(30, 2), pi(30, 2);
    twin << sigma.col(0), sigma.col(0);
    pi << one.pi.col(0), one.pi.col(0);
    const Vector weight = Vector::Constant(30, 1.0 / 30);
    const EmpiricalBound b = empirical_bound(twin, pi, Vector::Constant(30, 0.3), weight);

    const MaximinSolution g = solve_global_maximin(b, Budget{weight, 0.3});
    CHECK(g.w(0) == doctest::Approx(g.w(1)).epsilon(1e-4));

    const Vector sopt = truncated_on(twin.col(0), weight, 0.3);
    Matrix comp(30, 2);
    comp << sopt, sopt;
    const MaximinSolution c = solve_constrained_maximin(b, comp);
    CHECK(c.improvement.components(0) == doctest::Approx(c.improvement.components(1)));
}

TEST_CASE("constant scales give the uniform rule")
{
    const Eigen::Index m = 12;
    const Vector weight = Vector::Constant(m, 1.0 / m);
    Matrix pi(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) pi.row(i) << i, -0.5 * i;
    const EmpiricalBound b = empirical_bound(Matrix::Ones(m, 2), pi, Vector::Constant(m, 0.2), weight);
    const MaximinSolution g = solve_global_maximin(b, Budget{weight, 0.3});
    CHECK((g.rho.array() - 0.3).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("global rule dominates the constrained rule")
{
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index m = 40;
        Matrix sigma;
        const EmpiricalBound b = random_instance(rng, m, 0.3, &sigma);
        const Vector weight = Vector::Constant(m, 1.0 / m);
        Matrix comp(m, 2);
        comp << truncated_on(sigma.col(0), weight, 0.3), truncated_on(sigma.col(1), weight, 0.3);
        const MaximinSolution c = solve_constrained_maximin(b, comp);
        const MaximinSolution g = solve_global_maximin(b, Budget{weight, 0.3});
        CAPTURE(trial);
        CHECK(c.objective >= -1e-12);
        CHECK(g.objective >= c.objective - 1e-9);
        CHECK(std::abs(weight.dot(g.rho) - 0.3) <= 1e-12);
        // strong duality: the dual value equals the achieved objective
        const GlobalDual dual(b, Budget{weight, 0.3}, Vector::Ones(2));
        CHECK(dual.value(g.w) == doctest::Approx(g.objective).epsilon(1e-6));
    }
}

TEST_CASE("equal priorities reproduce the global rule")
{
    std::mt19937_64 rng(19);
    const Eigen::Index m = 40;
    const EmpiricalBound b = random_instance(rng, m, 0.3);
    const Vector weight = Vector::Constant(m, 1.0 / m);
    const MaximinSolution g = solve_global_maximin(b, Budget{weight, 0.3});
    const MaximinSolution p = solve_priority_maximin(b, Budget{weight, 0.3}, Vector::Constant(2, 0.5));
    CHECK((g.rho - p.rho).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("priority shifts improvement towards the favoured component")
{
    std::mt19937_64 rng(23);
    const Eigen::Index m = 40;
    const EmpiricalBound b = random_instance(rng, m, 0.3);
    const Vector weight = Vector::Constant(m, 1.0 / m);
    double previous = -1.0;
    for (double a1 : {0.2, 0.5, 0.8, 0.95}) {
        const MaximinSolution p =
            solve_priority_maximin(b, Budget{weight, 0.3}, (Vector(2) << a1, 1.0 - a1).finished());
        CHECK(p.improvement.components(0) >= previous - 1e-9);
        previous = p.improvement.components(0);
    }
    CHECK_THROWS_AS(solve_priority_maximin(b, Budget{weight, 0.3}, (Vector(2) << 0.7, 0.7).finished()),
                    InvalidInput);
}

TEST_CASE("brute force recovers the two-point optimal rule")
{
    DiscreteLaw law{Vector::Constant(2, 0.5), Matrix(2, 1), Matrix::Zero(2, 1)};
    law.sigma << 1.0, 3.0;
    const BruteForceResult r = primal_brute_force(law, Vector::Constant(2, 0.5), 0.5, 0.0025);
    CHECK(r.rho(0) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(r.rho(1) == doctest::Approx(0.75).epsilon(1e-9));
    // improvement (10 - 8) / 10
    CHECK(r.value == doctest::Approx(0.2).epsilon(1e-9));

    DiscreteLaw single{Vector::Ones(1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
    const BruteForceResult s = primal_brute_force(single, Vector::Constant(1, 0.3), 0.4, 0.01);
    CHECK(s.rho(0) == doctest::Approx(0.4));
}

TEST_CASE("brute force agrees with the dual on a three-point law")
{
    DiscreteLaw law{(Vector(3) << 0.2, 0.5, 0.3).finished(), Matrix(3, 2), Matrix(3, 2)};
    law.sigma << 0.5, 2.0, 1.5, 0.3, 1.0, 1.0;
    law.pi << 0.0, 1.0, 1.0, 0.0, -1.0, 0.5;
    const Vector rho0 = Vector::Constant(3, 0.3);
    const EmpiricalBound b = empirical_bound(law.sigma, law.pi, rho0, law.prob);
    const MaximinSolution g = solve_global_maximin(b, Budget{law.prob, 0.3});
    const BruteForceResult r = primal_brute_force(law, rho0, 0.3, 0.01, 2);
    CHECK(std::abs(r.value - g.objective) <= 1e-3);
    CHECK(r.value <= g.objective + 1e-9);
}

TEST_CASE("diagnostic-test triple: bounds match independent enumeration")
{
    const ClassificationDemo demo = classification_demo(0.3, kTheta);
    const double th1 = 0.2, th2 = 0.8, th3 = 0.6;

    // rules: uniform, prevalence-optimal and sum, built here from the joint law
    const double p1 = (1 - th1) * (1 - th3) + th1 * th2;  // P(X = 1)
    const double q1 = th1 * th2 / p1;                     // P(Y = 1 | X = 1)
    const double q0 = th1 * (1 - th2) / (1 - p1);         // P(Y = 1 | X = 0)
    const double s1 = std::sqrt(q1 * (1 - q1)), s0 = std::sqrt(q0 * (1 - q0));
    const double tau = ((1 - p1) * s0 + p1 * s1) / 0.3;
    const Vector prev_rule = (Vector(2) << s0 / tau, s1 / tau).finished();
    CHECK((demo.row("sopt:1").rho - prev_rule).cwiseAbs().maxCoeff() <= 1e-12);

    const auto uniform = oracle::classification_bounds(th1, th2, th3, 0.3, 0.3);
    const auto prev = oracle::classification_bounds(th1, th2, th3, prev_rule(0), prev_rule(1));
    const Vector sum_rho = demo.row("sum").rho;
    const auto sum = oracle::classification_bounds(th1, th2, th3, sum_rho(0), sum_rho(1));

    CHECK(demo.row("uniform").bound(0) == doctest::Approx(uniform.prevalence).epsilon(1e-12));
    CHECK(demo.row("uniform").bound(1) == doctest::Approx(uniform.sensitivity).epsilon(1e-12));
    CHECK(demo.row("uniform").bound(2) == doctest::Approx(uniform.specificity).epsilon(1e-12));
    CHECK(demo.row("sopt:1").bound(2) == doctest::Approx(prev.specificity).epsilon(1e-12));
    CHECK(demo.row("sum").bound(2) == doctest::Approx(sum.specificity).epsilon(1e-12));

    // pinned from the enumeration
    CHECK(uniform.specificity == doctest::Approx(0.4615).epsilon(1e-3));
    CHECK(prev.specificity == doctest::Approx(0.4277).epsilon(1e-3));
    CHECK(sum.specificity == doctest::Approx(0.5054).epsilon(1e-3));

    // full observation gives th3 (1 - th3) / (1 - th1)
    CHECK(demo.full_data_bound(2) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("diagnostic-test triple: maximin rules")
{
    const ClassificationDemo demo = classification_demo(0.3, kTheta);
    const Vector copt = demo.row("copt").improvement;
    const Vector gopt = demo.row("gopt").improvement;
    CHECK(copt.minCoeff() >= -1e-12);
    CHECK(gopt.minCoeff() >= -1e-8);
    CHECK(gopt.minCoeff() >= copt.minCoeff() - 1e-8);

    // the sum rule hurts specificity
    CHECK(demo.row("sum").improvement(2) < 0.0);

    // dense simplex grid over mixtures of the three component rules
    const DiscreteLaw law = classification_law(kTheta);
    const EmpiricalBound b = empirical_bound(law.sigma, law.pi, Vector::Constant(2, 0.3), law.prob);
    Matrix comp(2, 3);
    for (int j = 0; j < 3; ++j) comp.col(j) = demo.row("sopt:" + std::to_string(j + 1)).rho;
    double grid_best = -1e300;
    const int steps = 200;
    for (int a = 0; a <= steps; ++a) {
        for (int c = 0; a + c <= steps; ++c) {
            for (int e = 0; a + c + e <= steps; ++e) {
                const Vector w = (Vector(3) << a, c, e).finished() / steps;
                const Vector rho = b.rho0 + (comp.colwise() - b.rho0) * w;
                grid_best = std::max(grid_best, relative_improvement(b, rho).min);
            }
        }
    }
    CHECK(copt.minCoeff() >= grid_best - 1e-9);
}

TEST_CASE("saturated budget in the demo")
{
    const ClassificationDemo demo = classification_demo(1.0, kTheta);
    for (const auto& r : demo.rows) {
        CAPTURE(r.rule);
        CHECK((r.rho.array() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK((r.bound - demo.full_data_bound).cwiseAbs().maxCoeff() <= 1e-12);
    }
}
