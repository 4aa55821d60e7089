#include "twophase/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

namespace twophase {

std::string to_string(Dgp dgp)
{
    switch (dgp) {
    case Dgp::AteScalar: return "ate_scalar";
    case Dgp::AteMulti: return "ate_multi";
    case Dgp::MeanScalar: return "mean_scalar";
    case Dgp::MeanMulti: return "mean_multi";
    case Dgp::RegScalar: return "reg_scalar";
    case Dgp::RegMulti: return "reg_multi";
    }
    return "unknown";
}

Dgp parse_dgp(const std::string& name)
{
    for (auto d : {Dgp::AteScalar, Dgp::AteMulti, Dgp::MeanScalar, Dgp::MeanMulti, Dgp::RegScalar, Dgp::RegMulti}) {
        if (to_string(d) == name) return d;
    }
    throw InvalidInput("unknown dgp '" + name + "'");
}

namespace {

struct Covariates {
    RowMatrix Z;
    Vector s;  // zeta^T Z
};

Covariates draw_covariates(Eigen::Index n, int q, Rng& rng)
{
    require(q >= 1, "generator: q must be at least 1");
    require(n >= 1, "generator: n must be at least 1");
    std::uniform_real_distribution<double> unif(-2.5, 2.5);
    const double zeta = 0.5 / std::sqrt(static_cast<double>(q));
    Covariates c{RowMatrix(n, q), Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < q; ++k) {
            c.Z(i, k) = unif(rng);
            s += zeta * c.Z(i, k);
        }
        c.s(i) = s;
    }
    return c;
}

double nu1(double s)
{
    return std::sqrt(0.1 + std::pow(2.0 * s, 4));
}

double nu2(double s)
{
    return std::exp(2.0 * s);
}

} // namespace

SimData gen_ate_scalar(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    SimData d{RowMatrix(n, 2 + q), RowMatrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        const double x = s + 0.5 * normal(rng);
        const double e = normal(rng);
        const double y0 = 0.5 * s + x + std::exp(2.0 * s) * e;
        const double y1 = 1.5 + 0.5 * s - x + std::exp(2.0 * s) * e;
        const double p = 1.0 / (1.0 + std::exp(0.1 * s - 0.5 * x));
        const double t = unif(rng) < p ? 1.0 : 0.0;
        d.V(i, 0) = t == 1.0 ? y1 : y0;
        d.V(i, 1) = t;
        d.V.row(i).tail(q) = c.Z.row(i);
        d.U(i, 0) = x;
    }
    return d;
}

SimData gen_ate_multi(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    SimData d{RowMatrix(n, 2 + q), RowMatrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        const double x = s + 0.5 * normal(rng);
        const double e = normal(rng);
        const double y0 = 0.5 * s + x + (0.5 + nu2(s)) * e;
        const double y1 = 1.0 + 0.5 * s - x + (nu1(s) + nu2(s)) * e;
        const double y2 = 0.5 - 0.5 * s - 0.5 * x + nu2(s) * e;
        const double e1 = std::exp(-0.1 * s + 0.25 * x);
        const double e2 = std::exp(0.1 * s - 0.25 * x);
        const double denom = 1.0 + e1 + e2;
        const double u = unif(rng);
        const int t = u < e1 / denom ? 1 : (u < (e1 + e2) / denom ? 2 : 0);
        d.V(i, 0) = t == 0 ? y0 : (t == 1 ? y1 : y2);
        d.V(i, 1) = t;
        d.V.row(i).tail(q) = c.Z.row(i);
        d.U(i, 0) = x;
    }
    return d;
}

SimData gen_mean_scalar(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    SimData d{c.Z, RowMatrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        d.U(i, 0) = 1.0 + s + nu1(s) * normal(rng);
    }
    return d;
}

SimData gen_mean_multi(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    SimData d{c.Z, RowMatrix(n, 2)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        const double e1 = normal(rng);
        const double e2 = normal(rng);
        d.U(i, 0) = 1.0 - s + nu1(s) * e1;
        d.U(i, 1) = std::sin(s) + nu2(s) * e2;
    }
    return d;
}

SimData gen_reg_scalar(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    SimData d{RowMatrix(n, 1 + q), RowMatrix(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        const double x = std::sin(s) + nu2(s) * normal(rng);
        const double y = s + x + normal(rng);
        d.V(i, 0) = y;
        d.V.row(i).tail(q) = c.Z.row(i);
        d.U(i, 0) = x;
    }
    return d;
}

SimData gen_reg_multi(Eigen::Index n, int q, Rng& rng)
{
    const Covariates c = draw_covariates(n, q, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    SimData d{RowMatrix(n, 1 + q), RowMatrix(n, 2)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = c.s(i);
        const double x1 = s + nu1(s) * normal(rng);
        const double x2 = -s + nu2(s) * normal(rng);
        const double y = s + 0.0 * x1 + 1.0 * x2 + normal(rng);
        d.V(i, 0) = y;
        d.V.row(i).tail(q) = c.Z.row(i);
        d.U(i, 0) = x1;
        d.U(i, 1) = x2;
    }
    return d;
}

SimData generate(Dgp dgp, Eigen::Index n, int q, Rng& rng)
{
    switch (dgp) {
    case Dgp::AteScalar: return gen_ate_scalar(n, q, rng);
    case Dgp::AteMulti: return gen_ate_multi(n, q, rng);
    case Dgp::MeanScalar: return gen_mean_scalar(n, q, rng);
    case Dgp::MeanMulti: return gen_mean_multi(n, q, rng);
    case Dgp::RegScalar: return gen_reg_scalar(n, q, rng);
    case Dgp::RegMulti: return gen_reg_multi(n, q, rng);
    }
    throw InvalidInput("unknown dgp");
}

EstimationProblem dgp_problem(Dgp dgp, int q)
{
    switch (dgp) {
    case Dgp::AteScalar: return EstimationProblem::ate_binary(1, q);
    case Dgp::AteMulti: return EstimationProblem::ate_multi(2, 1, q);
    case Dgp::MeanScalar: return EstimationProblem::mean(1, q);
    case Dgp::MeanMulti: return EstimationProblem::mean(2, q);
    case Dgp::RegScalar: return EstimationProblem::linear_coef(1, q);
    case Dgp::RegMulti: return EstimationProblem::linear_coef(2, q);
    }
    throw InvalidInput("unknown dgp");
}

Vector dgp_truth(Dgp dgp)
{
    switch (dgp) {
    case Dgp::AteScalar: return Vector::Constant(1, 1.5);
    case Dgp::AteMulti: return (Vector(2) << 1.0, 0.5).finished();
    case Dgp::MeanScalar: return Vector::Constant(1, 1.0);
    case Dgp::MeanMulti: return (Vector(2) << 1.0, 0.0).finished();
    case Dgp::RegScalar: return Vector::Constant(1, 1.0);
    case Dgp::RegMulti: return (Vector(2) << 0.0, 1.0).finished();
    }
    throw InvalidInput("unknown dgp");
}

double dgp_kappa_constant(Dgp dgp, int q)
{
    return (dgp == Dgp::MeanScalar || dgp == Dgp::MeanMulti) ? q : q + 1.0;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate)
{
    return seed ^ splitmix64(replicate);
}

// ---------------------------------------------------------------------------

ScenarioSpec ScenarioSpec::from_config(const KvConfig& cfg)
{
    cfg.reject_unknown({"dgp", "n", "q", "varpi", "reps", "seed", "rules", "estimators", "kappa_c", "priority", "ridge"});
    ScenarioSpec s;
    s.dgp = parse_dgp(cfg.get("dgp"));
    s.n = cfg.get_int_or("n", s.n);
    s.q = static_cast<int>(cfg.get_int_or("q", s.q));
    s.varpi = cfg.get_double_or("varpi", s.varpi);
    s.reps = static_cast<int>(cfg.get_int_or("reps", s.reps));
    if (cfg.has("seed")) {
        const long long seed = cfg.get_int("seed");
        require(seed >= 0, "scenario: seed must be nonnegative");
        s.seed = static_cast<std::uint64_t>(seed);
    }
    if (cfg.has("rules")) s.rules = cfg.get_list("rules");
    if (cfg.has("estimators")) {
        s.estimators.clear();
        for (const auto& e : cfg.get_list("estimators")) s.estimators.push_back(parse_estimator(e));
    }
    if (cfg.has("kappa_c")) s.kappa_c = cfg.get_double("kappa_c");
    if (cfg.has("ridge")) s.ridge = cfg.get_double("ridge");
    if (cfg.has("priority")) {
        const auto a = cfg.get_doubles("priority");
        s.priority = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
    }
    s.validate();
    return s;
}

ScenarioSpec ScenarioSpec::load(const std::string& path)
{
    return from_config(KvConfig::load(path));
}

void ScenarioSpec::validate() const
{
    require(reps >= 1, "scenario: reps must be at least 1");
    require(n >= 10, "scenario: n must be at least 10");
    require(q >= 1, "scenario: q must be at least 1");
    require(varpi > 0.0 && varpi <= 1.0, "scenario: varpi must lie in (0,1]");
    require(!rules.empty(), "scenario: no rules listed");
    require(!estimators.empty(), "scenario: no estimators listed");
    const double c = kappa_c.value_or(dgp_kappa_constant(dgp, q));
    const double kappa = kappa_default(varpi, static_cast<double>(n), c);
    require(static_cast<double>(n) * varpi > static_cast<double>(n) * kappa, "scenario: budget does not exceed the pilot");
    const int d = static_cast<int>(dgp_truth(dgp).size());
    const std::set<std::string> known{"uniform", "sopt", "sum", "copt", "gopt", "priority"};
    for (const auto& r : expand_rules(rules, d)) {
        if (r.rfind("sopt:", 0) == 0) {
            const long long j = parse_int(r.substr(5), "scenario: rule " + r);
            require(j >= 1 && j <= d, "scenario: rule " + r + " refers to a missing component");
        } else {
            require(known.count(r) != 0, "scenario: unknown rule '" + r + "'");
        }
    }
    const bool wants_priority = std::find(rules.begin(), rules.end(), "priority") != rules.end();
    require(!wants_priority || priority.has_value(), "scenario: rule 'priority' needs a priority vector");
    if (priority) require(priority->size() == d, "scenario: priority vector needs one entry per component");
    if (ridge) require(*ridge >= 0.0, "scenario: ridge must be nonnegative");
}

std::vector<std::string> ScenarioSpec::describe() const
{
    std::vector<std::string> out;
    out.push_back("dgp = " + to_string(dgp));
    out.push_back("n = " + std::to_string(n));
    out.push_back("q = " + std::to_string(q));
    out.push_back("varpi = " + format_double(varpi));
    out.push_back("reps = " + std::to_string(reps));
    out.push_back("seed = " + std::to_string(seed));
    std::string r;
    for (const auto& x : rules) r += (r.empty() ? "" : ", ") + x;
    out.push_back("rules = " + r);
    std::string e;
    for (auto k : estimators) e += (e.empty() ? "" : ", ") + to_string(k);
    out.push_back("estimators = " + e);
    const double c = kappa_c.value_or(dgp_kappa_constant(dgp, q));
    out.push_back("kappa_c = " + format_double(c));
    out.push_back("kappa = " + format_double(kappa_default(varpi, static_cast<double>(n), c)));
    if (ridge) out.push_back("ridge = " + format_double(*ridge));
    if (priority) {
        std::string p;
        for (Eigen::Index j = 0; j < priority->size(); ++j) p += (j ? ", " : "") + format_double((*priority)(j));
        out.push_back("priority = " + p);
    }
    return out;
}

std::vector<std::string> expand_rules(const std::vector<std::string>& rules, int d)
{
    std::vector<std::string> out;
    for (const auto& r : rules) {
        if (r == "sopt") {
            for (int j = 1; j <= d; ++j) out.push_back("sopt:" + std::to_string(j));
        } else {
            out.push_back(r);
        }
    }
    return out;
}

ReplicateResult run_replicate(const ScenarioSpec& spec, int replicate)
{
    ReplicateResult res;
    try {
        const std::uint64_t seed = replicate_seed(spec.seed, static_cast<std::uint64_t>(replicate));
        Rng rng(seed);
        const SimData sim = generate(spec.dgp, spec.n, spec.q, rng);
        const EstimationProblem problem = dgp_problem(spec.dgp, spec.q);
        const Vector truth = dgp_truth(spec.dgp);
        const double c = spec.kappa_c.value_or(dgp_kappa_constant(spec.dgp, spec.q));
        const double kappa = kappa_default(spec.varpi, static_cast<double>(spec.n), c);

        TwoPhaseDataset base;
        base.V = sim.V;
        base.U = sim.U;
        base.kappa = kappa;
        base.R1 = draw_pilot(spec.n, kappa, rng);
        base.R2.assign(static_cast<std::size_t>(spec.n), 0);

        const std::vector<std::string> rules = expand_rules(spec.rules, problem.param_dim());
        DesignOptions opt;
        opt.varpi = spec.varpi;
        opt.kappa = kappa;
        opt.constrained = std::find(rules.begin(), rules.end(), "copt") != rules.end();
        opt.global = std::find(rules.begin(), rules.end(), "gopt") != rules.end();
        opt.priority = spec.priority;
        if (spec.ridge) opt.moments.ridge = *spec.ridge;
        if (std::find(rules.begin(), rules.end(), "priority") == rules.end()) opt.priority.reset();

        TwoPhaseDataset pilot_view = base;
        for (Eigen::Index i = 0; i < spec.n; ++i) {
            if (!base.R1[static_cast<std::size_t>(i)]) pilot_view.U.row(i).setConstant(std::nan(""));
        }
        const RuleBundle bundle = estimate_rules(problem, pilot_view, opt);

        // Common random numbers: every rule sees the same second-phase uniforms.
        const std::uint64_t phase2_seed = splitmix64(seed ^ 0x5eedULL);
        for (const auto& name : rules) {
            TwoPhaseDataset data = base;
            Rng rng2(phase2_seed);
            draw_second_phase(data, bundle.rule(name), rng2);
            for (Eigen::Index i = 0; i < spec.n; ++i) {
                if (!data.observed(i)) data.U.row(i).setConstant(std::nan(""));
            }
            const auto reports =
                run_estimators(problem, data, bundle.eta, *bundle.models, bundle.theta_pilot, spec.estimators, name);
            for (const auto& rep : reports) {
                ReplicateRecord rec;
                rec.rule = name;
                rec.estimator = rep.kind;
                rec.theta = rep.theta;
                rec.se = rep.se;
                if (!rep.theta.allFinite() || !rep.se.allFinite()) throw NumericalError("non-finite estimate");
                for (Eigen::Index j = 0; j < truth.size(); ++j) {
                    rec.covered.push_back(rep.ci_lo(j) <= truth(j) && truth(j) <= rep.ci_hi(j));
                }
                rec.sampled_fraction = rep.sampled_fraction;
                res.records.push_back(std::move(rec));
            }
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = "replicate " + std::to_string(replicate) + ": " + e.what();
        res.records.clear();
    }
    return res;
}

const AggregateRow& AggregateTable::find(const std::string& rule, const std::string& estimator, int component) const
{
    for (const auto& r : rows) {
        if (r.rule == rule && r.estimator == estimator && r.component == component) return r;
    }
    throw InvalidInput("aggregate: no row for " + rule + "/" + estimator + "/" + std::to_string(component));
}

AggregateTable aggregate(const ScenarioSpec& spec, const std::vector<ReplicateResult>& results)
{
    AggregateTable table;
    const Vector truth = dgp_truth(spec.dgp);
    const int d = static_cast<int>(truth.size());
    const std::vector<std::string> rules = expand_rules(spec.rules, d);
    for (const auto& r : results) {
        if (!r.ok) {
            ++table.failed;
            table.failure_messages.push_back(r.error);
        }
    }

    auto collect = [&](const std::string& rule, EstimatorKind est, int j, std::vector<double>& theta,
                       std::vector<double>& se, int& hits, double& frac) {
        for (const auto& r : results) {
            if (!r.ok) continue;
            for (const auto& rec : r.records) {
                if (rec.rule != rule || rec.estimator != est) continue;
                theta.push_back(rec.theta(j));
                se.push_back(rec.se(j));
                hits += rec.covered[static_cast<std::size_t>(j)] ? 1 : 0;
                frac += rec.sampled_fraction;
            }
        }
    };
    auto variance = [](const std::vector<double>& x) {
        if (x.size() < 2) return std::nan("");
        double m = 0.0;
        for (double v : x) m += v;
        m /= static_cast<double>(x.size());
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return ss / static_cast<double>(x.size() - 1);
    };

    for (const auto& rule : rules) {
        for (auto est : spec.estimators) {
            for (int j = 0; j < d; ++j) {
                std::vector<double> theta;
                std::vector<double> se;
                int hits = 0;
                double frac = 0.0;
                collect(rule, est, j, theta, se, hits, frac);
                AggregateRow row;
                row.rule = rule;
                row.estimator = to_string(est);
                row.component = j + 1;
                row.reps_ok = static_cast<int>(theta.size());
                row.reps_failed = table.failed;
                if (!theta.empty()) {
                    const double k = static_cast<double>(theta.size());
                    double mean = 0.0;
                    double mse = 0.0;
                    for (std::size_t r = 0; r < theta.size(); ++r) {
                        mean += theta[r];
                        mse += se[r];
                    }
                    row.bias = mean / k - truth(j);
                    const double var = variance(theta);
                    row.se = std::sqrt(var);
                    row.coverage = hits / k;
                    row.mean_se = mse / k;
                    row.sampled_fraction = frac / k;
                    std::vector<double> uni_theta;
                    std::vector<double> uni_se;
                    int uh = 0;
                    double uf = 0.0;
                    collect("uniform", est, j, uni_theta, uni_se, uh, uf);
                    const double uvar = variance(uni_theta);
                    if (rule == "uniform" && std::isfinite(var) && var > 0.0) row.re = 1.0;
                    else if (std::isfinite(uvar) && std::isfinite(var) && var > 0.0) row.re = uvar / var;
                } else {
                    row.bias = row.se = row.coverage = row.mean_se = row.sampled_fraction = std::nan("");
                }
                table.rows.push_back(row);
            }
        }
    }
    return table;
}

AggregateTable run_scenario(const ScenarioSpec& spec, int threads)
{
    spec.validate();
    require(threads >= 1, "scenario: threads must be at least 1");
    std::vector<ReplicateResult> results(static_cast<std::size_t>(spec.reps));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int r = next++; r < spec.reps; r = next++) results[static_cast<std::size_t>(r)] = run_replicate(spec, r);
    };
    const int used = std::min(threads, spec.reps);
    std::vector<std::thread> pool;
    for (int t = 1; t < used; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return aggregate(spec, results);
}

namespace {

std::string fmt(double x)
{
    if (std::isnan(x)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

} // namespace

std::string table_to_csv(const ScenarioSpec& spec, const AggregateTable& table)
{
    std::ostringstream out;
    for (const auto& line : spec.describe()) out << "# " << line << '\n';
    out << "# failed_replicates = " << table.failed << '\n';
    out << "rule,estimator,component,bias,se,re,coverage,mean_se,sampled_fraction,reps_ok,reps_failed\n";
    for (const auto& r : table.rows) {
        out << r.rule << ',' << r.estimator << ',' << r.component << ',' << fmt(r.bias) << ',' << fmt(r.se) << ','
            << (r.re ? fmt(*r.re) : "") << ',' << fmt(r.coverage) << ',' << fmt(r.mean_se) << ','
            << fmt(r.sampled_fraction) << ',' << r.reps_ok << ',' << r.reps_failed << '\n';
    }
    return out.str();
}

} // namespace twophase
