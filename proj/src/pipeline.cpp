#include "twophase/pipeline.hpp"

#include <cmath>

namespace twophase {

double kappa_default(double varpi, double n, double c)
{
    require(varpi > 0.0 && varpi <= 1.0, "kappa: budget must lie in (0,1]");
    require(c > 0.0, "kappa: constant must be positive");
    const double arg = varpi * n / c;
    if (!(arg > 1.0)) throw InvalidInput("kappa: varpi * n / c must exceed 1");
    return varpi / (1.0 + std::log(arg));
}

Indicator draw_pilot(Eigen::Index n, double kappa, Rng& rng)
{
    require(kappa > 0.0 && kappa < 1.0, "pilot: kappa must lie in (0,1)");
    std::bernoulli_distribution coin(kappa);
    Indicator r(static_cast<std::size_t>(n));
    for (auto& x : r) x = coin(rng) ? 1 : 0;
    return r;
}

const SamplingRule& RuleBundle::rule(const std::string& name) const
{
    for (const auto& r : rules) {
        if (r.name == name) return r.rule;
    }
    throw InvalidInput("no rule named '" + name + "'");
}

bool RuleBundle::has_rule(const std::string& name) const
{
    for (const auto& r : rules) {
        if (r.name == name) return true;
    }
    return false;
}

RuleBundle estimate_rules(const EstimationProblem& problem, const TwoPhaseDataset& data, const DesignOptions& options)
{
    const Eigen::Index n = data.size();
    require(static_cast<Eigen::Index>(data.R1.size()) == n, "design: pilot indicators have wrong length");
    require(options.kappa >= 0.0 && options.kappa < options.varpi && options.varpi <= 1.0,
            "design: need 0 <= kappa < varpi <= 1");
    const Eigen::Index m = data.pilot_count();
    require(m > 0, "design: no pilot units");
    const Eigen::Index rest = n - m;
    require(rest > 0, "design: every unit is in the pilot");

    RuleBundle out;
    out.varpi = options.varpi;
    out.kappa = options.kappa;

    const RowMatrix Vp = data.rows_V(data.R1);
    const RowMatrix Up = data.rows_U(data.R1);
    out.eta = problem.fit_nuisance(Vp, Up);
    out.theta_pilot = problem.solve_theta_pilot(Vp, Up, out.eta);

    const int d = problem.param_dim();
    Matrix psi(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
        psi.row(i) = problem.psi(row_of(Vp, i), row_of(Up, i), out.theta_pilot, out.eta).transpose();
    }
    out.models = fit_moment_models(psi, Vp, options.moments);
    out.sigma = out.models->sd_table(data.V);
    out.pi = out.models->mean_table(data.V);

    const double target = options.varpi - options.kappa;
    out.budget_weight.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.budget_weight(i) = data.R1[static_cast<std::size_t>(i)] ? 0.0 : 1.0 / static_cast<double>(n);
    }
    out.uniform_level = target * static_cast<double>(n) / static_cast<double>(rest);
    require(out.uniform_level <= 1.0, "design: budget exceeds the number of non-pilot units");

    const SamplingRule uniform = SamplingRule::uniform(out.uniform_level);
    out.rules.push_back({"uniform", uniform});
    std::vector<SamplingRule> component_rules;
    Matrix component_rho(n, d);
    for (int j = 0; j < d; ++j) {
        SamplingRule r = budget_rule(component_score(out.models, j), data.V, out.budget_weight, target);
        component_rho.col(j) = r.eval_all(data.V);
        component_rules.push_back(r);
        out.rules.push_back({"sopt:" + std::to_string(j + 1), r});
    }
    out.rules.push_back({"sum", budget_rule(sum_score(out.models), data.V, out.budget_weight, target)});

    const Vector rho0 = Vector::Constant(n, out.uniform_level);
    out.bound = empirical_bound(out.sigma, out.pi, rho0, Vector::Constant(n, 1.0 / static_cast<double>(n)));
    const Budget budget{out.budget_weight, target};

    if (options.constrained) {
        out.constrained = solve_constrained_maximin(*out.bound, component_rho, options.maximin);
        out.rules.push_back({"copt", SamplingRule::mixture(uniform, component_rules, out.constrained->w)});
    }
    if (options.global) {
        out.global = solve_global_maximin(*out.bound, budget, options.maximin);
        out.rules.push_back(
            {"gopt", SamplingRule::truncated(MomentScore{out.models, out.global->score_coef}, out.global->threshold.tau)});
    }
    if (options.priority) {
        out.priority = solve_priority_maximin(*out.bound, budget, *options.priority, options.maximin);
        out.rules.push_back({"priority", SamplingRule::truncated(MomentScore{out.models, out.priority->score_coef},
                                                                 out.priority->threshold.tau)});
    }
    return out;
}

double budget_residual(const SamplingRule& rule, const TwoPhaseDataset& data, double varpi, double kappa)
{
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (!data.R1[static_cast<std::size_t>(i)]) total += rule.eval(row_of(data.V, i));
    }
    return total / static_cast<double>(data.size()) - (varpi - kappa);
}

void set_inclusion(TwoPhaseDataset& data, const SamplingRule& rule)
{
    const Eigen::Index n = data.size();
    data.rule_values.resize(n);
    data.rho_n.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = rule.eval(row_of(data.V, i));
        data.rule_values(i) = v;
        data.rho_n(i) = data.kappa + (1.0 - data.kappa) * v;
    }
}

void draw_second_phase(TwoPhaseDataset& data, const SamplingRule& rule, Rng& rng)
{
    set_inclusion(data, rule);
    data.R2.assign(static_cast<std::size_t>(data.size()), 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.R1[static_cast<std::size_t>(i)]) continue;
        data.R2[static_cast<std::size_t>(i)] = unif(rng) < data.rule_values(i) ? 1 : 0;
    }
}

// ---------------------------------------------------------------------------

std::string to_string(EstimatorKind kind)
{
    switch (kind) {
    case EstimatorKind::OneStep: return "onestep";
    case EstimatorKind::ExcludePilot: return "exclude-pilot";
    case EstimatorKind::IvwMeta: return "ivw";
    case EstimatorKind::IpwOnly: return "ipw";
    case EstimatorKind::Pilot: return "pilot";
    }
    return "unknown";
}

EstimatorKind parse_estimator(const std::string& name)
{
    for (auto k : {EstimatorKind::OneStep, EstimatorKind::ExcludePilot, EstimatorKind::IvwMeta, EstimatorKind::IpwOnly,
                   EstimatorKind::Pilot}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidInput("unknown estimator '" + name + "' (onestep, exclude-pilot, ivw, ipw, pilot)");
}

namespace {

EstimateReport report_from_eif(const Vector& theta, const Matrix& eif, EstimatorKind kind, const std::string& rule,
                               double sampled_fraction)
{
    const Eigen::Index n = eif.rows();
    require(n >= 2, "standard error: need at least two influence values");
    EstimateReport r;
    r.theta = theta;
    const Vector mean = eif.colwise().mean().transpose();
    const Vector ss = (eif.rowwise() - mean.transpose()).colwise().squaredNorm().transpose();
    r.se = (ss / (static_cast<double>(n) - 1.0) / static_cast<double>(n)).cwiseSqrt();
    r.ci_lo = theta - kNormalQuantile975 * r.se;
    r.ci_hi = theta + kNormalQuantile975 * r.se;
    r.kind = kind;
    r.rule_used = rule;
    r.sampled_fraction = sampled_fraction;
    return r;
}

Vector observed_weights(const TwoPhaseDataset& data)
{
    require(data.rho_n.size() == data.size(), "estimator: inclusion probabilities not set");
    Vector w = Vector::Zero(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (!data.observed(i)) continue;
        if (!(data.rho_n(i) > 0.0)) throw InvalidInput("estimator: observed unit with zero inclusion probability");
        w(i) = 1.0 / data.rho_n(i);
    }
    return w;
}

} // namespace

Vector ipw_estimate(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta)
{
    require(data.observed_count() > 0, "estimator: no observed units");
    return problem.solve_theta(data.V, data.U, observed_weights(data), eta);
}

EstimateReport ipw_report(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                          const std::string& rule_name)
{
    const Vector theta = ipw_estimate(problem, data, eta);
    const Vector w = observed_weights(data);
    Matrix eif = Matrix::Zero(data.size(), problem.param_dim());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (w(i) != 0.0) eif.row(i) = w(i) * problem.psi(row_of(data.V, i), row_of(data.U, i), theta, eta).transpose();
    }
    return report_from_eif(theta, eif, EstimatorKind::IpwOnly, rule_name, data.sampled_fraction());
}

EstimateReport one_step(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                        const MomentModels& models, const Vector& theta_ipw, const std::string& rule_name)
{
    require(theta_ipw.allFinite(), "one-step: IPW estimate is not finite");
    const Eigen::Index n = data.size();
    const int d = problem.param_dim();
    const Matrix pi = models.mean_table(data.V);
    require(pi.cols() == d, "one-step: moment models do not match the parameter dimension");
    const Vector w = observed_weights(data);

    Vector correction = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) correction += (w(i) - 1.0) * pi.row(i).transpose();
    const Vector theta = theta_ipw - correction / static_cast<double>(n);

    Matrix eif(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool r = data.observed(i);
        const Vector psi = r ? problem.psi(row_of(data.V, i), row_of(data.U, i), theta, eta) : Vector::Zero(d);
        eif.row(i) = two_phase_eif(psi, pi.row(i).transpose(), data.rho_n(i), r).transpose();
    }
    return report_from_eif(theta, eif, EstimatorKind::OneStep, rule_name, data.sampled_fraction());
}

EstimateReport one_step_excluding_pilot(const EstimationProblem& problem, const TwoPhaseDataset& data,
                                        const NuisanceParams& eta, const MomentModels& models,
                                        const std::string& rule_name)
{
    const Eigen::Index n = data.size();
    const int d = problem.param_dim();
    require(data.rule_values.size() == n, "exclude-pilot: rule values not set");
    Vector w = Vector::Zero(n);
    Eigen::Index rest = 0;
    Eigen::Index sampled = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.R1[static_cast<std::size_t>(i)]) continue;
        ++rest;
        if (data.R2[static_cast<std::size_t>(i)]) {
            if (!(data.rule_values(i) > 0.0)) throw InvalidInput("exclude-pilot: sampled unit with zero rule value");
            w(i) = 1.0 / data.rule_values(i);
            ++sampled;
        }
    }
    require(rest > 0 && sampled > 0, "exclude-pilot: empty non-pilot sample");
    const Vector theta_ipw = problem.solve_theta(data.V, data.U, w, eta);
    const Matrix pi = models.mean_table(data.V);

    Vector correction = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!data.R1[static_cast<std::size_t>(i)]) correction += (w(i) - 1.0) * pi.row(i).transpose();
    }
    const Vector theta = theta_ipw - correction / static_cast<double>(rest);

    Matrix eif(rest, d);
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.R1[static_cast<std::size_t>(i)]) continue;
        const bool r = data.R2[static_cast<std::size_t>(i)] != 0;
        const Vector psi = r ? problem.psi(row_of(data.V, i), row_of(data.U, i), theta, eta) : Vector::Zero(d);
        const double rho = r ? data.rule_values(i) : 1.0;
        eif.row(at++) = (r ? two_phase_eif(psi, pi.row(i).transpose(), rho, true) : Vector(pi.row(i).transpose())).transpose();
    }
    return report_from_eif(theta, eif, EstimatorKind::ExcludePilot, rule_name, data.sampled_fraction());
}

EstimateReport pilot_estimate(const EstimationProblem& problem, const TwoPhaseDataset& data, const NuisanceParams& eta,
                              const Vector& theta_pilot)
{
    const RowMatrix Vp = data.rows_V(data.R1);
    const RowMatrix Up = data.rows_U(data.R1);
    Matrix eif(Vp.rows(), problem.param_dim());
    for (Eigen::Index i = 0; i < Vp.rows(); ++i) {
        eif.row(i) = problem.psi(row_of(Vp, i), row_of(Up, i), theta_pilot, eta).transpose();
    }
    return report_from_eif(theta_pilot, eif, EstimatorKind::Pilot, "pilot", data.sampled_fraction());
}

EstimateReport ivw_combine(const EstimateReport& a, const EstimateReport& b)
{
    require(a.theta.size() == b.theta.size(), "ivw: reports differ in dimension");
    require((a.se.array() > 0.0).all() && (b.se.array() > 0.0).all(), "ivw: standard errors must be positive");
    EstimateReport r;
    const Vector wa = a.se.cwiseAbs2().cwiseInverse();
    const Vector wb = b.se.cwiseAbs2().cwiseInverse();
    const Vector total = wa + wb;
    r.theta = (a.theta.cwiseProduct(wa) + b.theta.cwiseProduct(wb)).cwiseQuotient(total);
    r.se = total.cwiseInverse().cwiseSqrt();
    r.ci_lo = r.theta - kNormalQuantile975 * r.se;
    r.ci_hi = r.theta + kNormalQuantile975 * r.se;
    r.kind = EstimatorKind::IvwMeta;
    r.rule_used = b.rule_used;
    r.sampled_fraction = b.sampled_fraction;
    return r;
}

std::vector<EstimateReport> run_estimators(const EstimationProblem& problem, const TwoPhaseDataset& data,
                                           const NuisanceParams& eta, const MomentModels& models,
                                           const Vector& theta_pilot, const std::vector<EstimatorKind>& kinds,
                                           const std::string& rule_name)
{
    std::vector<EstimateReport> out;
    for (auto kind : kinds) {
        switch (kind) {
        case EstimatorKind::OneStep:
            out.push_back(one_step(problem, data, eta, models, ipw_estimate(problem, data, eta), rule_name));
            break;
        case EstimatorKind::IpwOnly:
            out.push_back(ipw_report(problem, data, eta, rule_name));
            break;
        case EstimatorKind::ExcludePilot:
            out.push_back(one_step_excluding_pilot(problem, data, eta, models, rule_name));
            break;
        case EstimatorKind::IvwMeta:
            out.push_back(ivw_combine(pilot_estimate(problem, data, eta, theta_pilot),
                                      one_step_excluding_pilot(problem, data, eta, models, rule_name)));
            break;
        case EstimatorKind::Pilot:
            out.push_back(pilot_estimate(problem, data, eta, theta_pilot));
            break;
        }
    }
    return out;
}

} // namespace twophase
