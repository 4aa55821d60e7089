#include "twophase/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace twophase {

ThresholdFunction::ThresholdFunction(std::span<const double> sigma, std::span<const double> weight)
{
    require(sigma.size() == weight.size(), "threshold: sigma and weights differ in length");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        require(sigma[i] >= 0.0 && std::isfinite(sigma[i]), "threshold: sigma values must be finite and nonnegative");
        require(weight[i] >= 0.0, "threshold: weights must be nonnegative");
        if (weight[i] > 0.0 && sigma[i] > 0.0) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
    const std::size_t n = order.size();
    sigma_.resize(n);
    cum_weight_.assign(n + 1, 0.0);
    tail_wsigma_.assign(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        sigma_[k] = sigma[order[k]];
        cum_weight_[k + 1] = cum_weight_[k] + weight[order[k]];
    }
    for (std::size_t k = n; k-- > 0;) {
        tail_wsigma_[k] = tail_wsigma_[k + 1] + weight[order[k]] * sigma_[k];
    }
    positive_weight_ = cum_weight_[n];
    weighted_sigma_ = tail_wsigma_[0];
}

double ThresholdFunction::operator()(double tau) const
{
    // units with sigma >= tau are capped at one
    const auto it = std::lower_bound(sigma_.begin(), sigma_.end(), tau, std::greater_equal<double>());
    const auto k = static_cast<std::size_t>(it - sigma_.begin());
    return cum_weight_[k] + tail_wsigma_[k] / tau;
}

Threshold solve_threshold(std::span<const double> sigma, std::span<const double> weight, double target)
{
    require(target > 0.0, "threshold: target must be positive");
    const ThresholdFunction h(sigma, weight);
    if (!(h.max_sigma() > 0.0)) {
        throw NumericalError("threshold: all sigma values are zero; the rule is undefined");
    }
    Threshold out;
    if (target >= h.positive_weight()) {
        out.residual = h.positive_weight() - target;
        return out;
    }

    double lo = 1e-12 * h.max_sigma();
    double hi = h.weighted_sigma() / target * (1.0 + 1e-6);
    while (h(hi) > target) hi *= 2.0;
    if (h(lo) < target) {
        out.residual = h(lo) - target;
        return out;
    }
    double tau = 0.5 * (lo + hi);
    double val = h(tau);
    const double width_tol = 1e-14 * hi;
    while (std::abs(val - target) > 1e-10 && hi - lo > width_tol && out.iterations < 400) {
        if (val > target) lo = tau;
        else hi = tau;
        tau = 0.5 * (lo + hi);
        val = h(tau);
        ++out.iterations;
    }
    // On the piece containing tau, h(t) = A + B / t; solve it exactly when the
    // root stays on that piece.
    {
        double A = 0.0;
        double B = 0.0;
        for (std::size_t i = 0; i < sigma.size(); ++i) {
            if (weight[i] <= 0.0 || sigma[i] <= 0.0) continue;
            if (sigma[i] >= tau) A += weight[i];
            else B += weight[i] * sigma[i];
        }
        if (target > A && B > 0.0) {
            const double exact = B / (target - A);
            if (exact > 0.0 && std::abs(h(exact) - target) <= std::abs(val - target)) {
                tau = exact;
                val = h(exact);
            }
        }
    }
    out.tau = tau;
    out.residual = val - target;
    return out;
}

Threshold solve_threshold(std::span<const double> sigma, double target)
{
    require(!sigma.empty(), "threshold: no units");
    const std::vector<double> w(sigma.size(), 1.0 / static_cast<double>(sigma.size()));
    return solve_threshold(sigma, std::span<const double>(w), target);
}

Vector truncated_values(std::span<const double> sigma, const Threshold& t)
{
    Vector out(static_cast<Eigen::Index>(sigma.size()));
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = t.saturated() ? 1.0 : std::min(sigma[i] / t.tau, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------

double eval_score(const Score& score, Row v)
{
    if (const auto* ms = std::get_if<MomentScore>(&score)) {
        const Vector sd = ms->models->sd_at(v);
        require(sd.size() == ms->coef.size(), "score: coefficient count differs from model count");
        // A single unit coefficient is the component's own sigma, unchanged.
        int nonzero = 0;
        int last = -1;
        for (Eigen::Index j = 0; j < ms->coef.size(); ++j) {
            if (ms->coef(j) != 0.0) {
                ++nonzero;
                last = static_cast<int>(j);
            }
        }
        if (nonzero == 1 && ms->coef(last) == 1.0) return sd(last);
        return std::sqrt(ms->coef.dot(sd.cwiseAbs2()));
    }
    const auto& table = std::get<TableScore>(score);
    const auto it = table.values.find(std::vector<double>(v.begin(), v.end()));
    if (it == table.values.end()) throw InvalidInput("score: first-phase value outside the tabulated support");
    return it->second;
}

SamplingRule::SamplingRule(UniformRule r) : rule_(r)
{
    require(r.c >= 0.0 && r.c <= 1.0, "uniform rule: probability must lie in [0,1]");
}

SamplingRule::SamplingRule(TruncatedRule r) : rule_(std::move(r))
{
    require(std::get<TruncatedRule>(rule_).tau >= 0.0, "truncated rule: threshold must be nonnegative");
}

SamplingRule::SamplingRule(MixtureRule r) : rule_(std::move(r))
{
    const auto& m = std::get<MixtureRule>(rule_);
    require(m.base != nullptr, "mixture rule: missing base rule");
    require(static_cast<Eigen::Index>(m.components.size()) == m.weights.size(),
            "mixture rule: one weight per component required");
    require((m.weights.array() >= 0.0).all() && m.weights.sum() <= 1.0 + 1e-12,
            "mixture rule: weights must be nonnegative with sum at most one");
}

SamplingRule SamplingRule::mixture(SamplingRule base, std::vector<SamplingRule> components, Vector weights)
{
    return SamplingRule(MixtureRule{std::make_shared<const SamplingRule>(std::move(base)), std::move(components),
                                    std::move(weights)});
}

double SamplingRule::eval(Row v) const
{
    return std::visit(
        [&](const auto& r) -> double {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, UniformRule>) {
                return r.c;
            } else if constexpr (std::is_same_v<T, TruncatedRule>) {
                if (r.tau == 0.0) return 1.0;
                return std::min(eval_score(r.score, v) / r.tau, 1.0);
            } else {
                double value = (1.0 - r.weights.sum()) * r.base->eval(v);
                for (std::size_t k = 0; k < r.components.size(); ++k) {
                    const double w = r.weights(static_cast<Eigen::Index>(k));
                    if (w != 0.0) value += w * r.components[k].eval(v);
                }
                return std::clamp(value, 0.0, 1.0);
            }
        },
        rule_);
}

Vector SamplingRule::eval_all(const RowMatrix& V) const
{
    Vector out(V.rows());
    for (Eigen::Index i = 0; i < V.rows(); ++i) out(i) = eval(row_of(V, i));
    return out;
}

MomentScore component_score(std::shared_ptr<const MomentModels> models, int j)
{
    require(j >= 0 && j < models->size(), "component score: index out of range");
    Vector coef = Vector::Zero(models->size());
    coef(j) = 1.0;
    return MomentScore{std::move(models), coef};
}

MomentScore sum_score(std::shared_ptr<const MomentModels> models)
{
    const int d = models->size();
    return MomentScore{std::move(models), Vector::Ones(d)};
}

SamplingRule budget_rule(const Score& score, const RowMatrix& V, const Vector& budget_weight, double target)
{
    require(V.rows() == budget_weight.size(), "budget rule: weights and rows differ in length");
    std::vector<double> lambda(static_cast<std::size_t>(V.rows()));
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        lambda[static_cast<std::size_t>(i)] = budget_weight(i) > 0.0 ? eval_score(score, row_of(V, i)) : 0.0;
    }
    const Threshold t = solve_threshold(lambda, std::span<const double>(budget_weight.data(), lambda.size()), target);
    return SamplingRule::truncated(score, t.tau);
}

// ---------------------------------------------------------------------------

Vector EmpiricalBound::variance_term(const Vector& rho) const
{
    require(rho.size() == points(), "bound: rule values and points differ in length");
    Vector out = Vector::Zero(dim());
    for (Eigen::Index i = 0; i < points(); ++i) {
        if (weight(i) == 0.0) continue;
        for (int j = 0; j < dim(); ++j) {
            const double s2 = sigma(i, j) * sigma(i, j);
            if (s2 == 0.0) continue;
            if (!(rho(i) > 0.0)) throw InvalidInput("bound: rule is zero where the conditional variance is positive");
            out(j) += weight(i) * s2 / rho(i);
        }
    }
    return out;
}

Vector EmpiricalBound::bound_under(const Vector& rho) const
{
    return variance_term(rho) + var_pi;
}

EmpiricalBound empirical_bound(const Matrix& sigma, const Matrix& pi, const Vector& rho0, const Vector& weight)
{
    require(sigma.rows() == pi.rows() && sigma.cols() == pi.cols(), "bound: sigma and pi tables differ in shape");
    require(rho0.size() == sigma.rows() && weight.size() == sigma.rows(), "bound: table lengths differ");
    require((rho0.array() > 0.0).all(), "bound: benchmark rule must be positive on every point");
    require((weight.array() >= 0.0).all() && std::abs(weight.sum() - 1.0) < 1e-9,
            "bound: point weights must be nonnegative and sum to one");
    EmpiricalBound b;
    b.sigma = sigma;
    b.pi = pi;
    b.rho0 = rho0;
    b.weight = weight;
    b.xi = b.variance_term(rho0);
    const Vector mean_pi = pi.transpose() * weight;
    b.var_pi = Vector::Zero(sigma.cols());
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
        b.var_pi += weight(i) * (pi.row(i).transpose() - mean_pi).cwiseAbs2();
    }
    b.b = b.xi + b.var_pi;
    return b;
}

} // namespace twophase
