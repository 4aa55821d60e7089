#include "twophase/classification.hpp"

#include "twophase/eif.hpp"

namespace twophase {

DiscreteLaw classification_law(const Vector& theta)
{
    require(theta.size() == 3, "classification law: theta must have length 3");
    require((theta.array() > 0.0).all() && (theta.array() < 1.0).all(), "classification law: entries must lie in (0,1)");
    const double prev = theta(0);
    const double sens = theta(1);
    const double spec = theta(2);
    // p[x][y]
    const double p[2][2] = {{(1.0 - prev) * spec, prev * (1.0 - sens)}, {(1.0 - prev) * (1.0 - spec), prev * sens}};

    DiscreteLaw law{Vector(2), Matrix(2, 3), Matrix(2, 3)};
    for (int x = 0; x < 2; ++x) {
        const double px = p[x][0] + p[x][1];
        law.prob(x) = px;
        Vector m1 = Vector::Zero(3);
        Vector m2 = Vector::Zero(3);
        for (int y = 0; y < 2; ++y) {
            const Vector psi = psi_classification(x, y, theta);
            m1 += p[x][y] / px * psi;
            m2 += p[x][y] / px * psi.cwiseAbs2();
        }
        law.pi.row(x) = m1.transpose();
        law.sigma.row(x) = (m2 - m1.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().transpose();
    }
    return law;
}

const ClassificationRow& ClassificationDemo::row(const std::string& rule) const
{
    for (const auto& r : rows) {
        if (r.rule == rule) return r;
    }
    throw InvalidInput("classification demo: no rule '" + rule + "'");
}

ClassificationDemo classification_demo(double varpi, const Vector& theta)
{
    require(varpi > 0.0 && varpi <= 1.0, "classification demo: varpi must lie in (0,1]");
    const DiscreteLaw law = classification_law(theta);
    const Vector rho0 = Vector::Constant(2, varpi);
    const EmpiricalBound bound = empirical_bound(law.sigma, law.pi, rho0, law.prob);
    const Budget budget{law.prob, varpi};

    ClassificationDemo demo;
    demo.varpi = varpi;
    demo.theta = theta;
    demo.full_data_bound = bound.bound_under(Vector::Ones(2));

    auto add = [&](const std::string& name, const Vector& rho) {
        demo.rows.push_back({name, rho, bound.bound_under(rho), relative_improvement(bound, rho).components});
    };
    auto truncated = [&](const Vector& lambda) {
        const std::span<const double> s(lambda.data(), 2);
        return truncated_values(s, solve_threshold(s, std::span<const double>(law.prob.data(), 2), varpi));
    };

    add("uniform", rho0);
    Matrix component_rho(2, 3);
    for (int j = 0; j < 3; ++j) {
        component_rho.col(j) = truncated(law.sigma.col(j));
        add("sopt:" + std::to_string(j + 1), component_rho.col(j));
    }
    add("sum", truncated(law.sigma.rowwise().norm()));
    add("copt", solve_constrained_maximin(bound, component_rho).rho);
    add("gopt", solve_global_maximin(bound, budget).rho);
    return demo;
}

} // namespace twophase
