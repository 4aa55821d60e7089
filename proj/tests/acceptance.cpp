// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include "oracles.hpp"
#include "truth_psi.hpp"

#include "twophase/classification.hpp"
#include "twophase/maximin.hpp"
#include "twophase/moments.hpp"
#include "twophase/pipeline.hpp"
#include "twophase/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef TWOPHASE_SCENARIO_DIR
#define TWOPHASE_SCENARIO_DIR "scenarios"
#endif

using namespace twophase;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double x, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

ScenarioSpec scenario(const std::string& name)
{
    return ScenarioSpec::load(std::string(TWOPHASE_SCENARIO_DIR) + "/" + name + ".scn");
}

int worker_count()
{
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<ReplicateResult> run_replicates(const ScenarioSpec& spec)
{
    std::vector<ReplicateResult> results(static_cast<std::size_t>(spec.reps));
    std::atomic<int> next{0};
    auto work = [&]() {
        for (int r = next++; r < spec.reps; r = next++) results[static_cast<std::size_t>(r)] = run_replicate(spec, r);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min(worker_count(), spec.reps); ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return results;
}

// Closed-form truncated rule against an exact grid minimum.
Outcome closed_form_optimality()
{
    std::mt19937_64 rng(101);
    const int levels = 400;  // grid step 0.0025
    const double budgets[] = {0.2, 0.3, 0.5};
    double worst = -1e300;
    double largest_gap = 0.0;
    for (int k = 0; k < 20; ++k) {
        const oracle::RationalLaw law = oracle::random_law(rng, 6, 100);
        const double varpi = budgets[k % 3];
        const auto m = static_cast<Eigen::Index>(law.numer.size());
        Vector prob(m);
        for (Eigen::Index i = 0; i < m; ++i) prob(i) = law.prob(static_cast<std::size_t>(i));
        const std::span<const double> s(law.sigma.data(), law.sigma.size());
        const Vector rho = truncated_values(s, solve_threshold(s, std::span<const double>(prob.data(), s.size()), varpi));
        double closed = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) closed += prob(i) * law.sigma[static_cast<std::size_t>(i)] * law.sigma[static_cast<std::size_t>(i)] / rho(i);
        const double grid = oracle::grid_minimum(law, varpi, levels);
        worst = std::max(worst, closed - grid);
        largest_gap = std::max(largest_gap, grid - closed);
    }
    return {worst <= 1e-6, "max(closed - grid) = " + num(worst, 3) + ", grid excess up to " + num(largest_gap, 3)};
}

// Dual optimum against the primal brute force on random two-component laws.
Outcome dual_primal_equivalence()
{
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> support(2, 4);
    std::uniform_real_distribution<double> sd(0.1, 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const int m = support(rng);
        DiscreteLaw law{Vector(m), Matrix(m, 2), Matrix(m, 2)};
        std::gamma_distribution<double> mass(2.0, 1.0);
        for (int i = 0; i < m; ++i) {
            law.prob(i) = mass(rng);
            law.sigma.row(i) << sd(rng), sd(rng);
            law.pi.row(i) << g(rng), g(rng);
        }
        law.prob /= law.prob.sum();
        const double varpi = 0.3;
        const Vector rho0 = Vector::Constant(m, varpi);
        const EmpiricalBound bound = empirical_bound(law.sigma, law.pi, rho0, law.prob);
        const Budget budget{law.prob, varpi};
        const MaximinSolution sol = solve_global_maximin(bound, budget);
        const double dual_value = GlobalDual(bound, budget, Vector::Ones(2)).value(sol.w);
        const BruteForceResult brute = primal_brute_force(law, rho0, varpi, 0.01, 2);
        worst = std::max({worst, std::abs(dual_value - brute.value), std::abs(sol.objective - brute.value)});
    }
    return {worst <= 1e-3, "max |dual - brute force| = " + num(worst, 3)};
}

Outcome classification_numbers()
{
    const ClassificationDemo demo = classification_demo(0.3, (Vector(3) << 0.2, 0.8, 0.6).finished());
    const double sum = demo.row("sum").bound(2);
    const double prev = demo.row("sopt:1").bound(2);
    const double uniform = demo.row("uniform").bound(2);
    const bool pass = std::abs(sum - 0.35) <= 0.01 && std::abs(prev - 0.43) <= 0.01 && std::abs(uniform - 0.30) <= 0.01;
    return {pass, "specificity bounds: sum " + num(sum) + " (want 0.35), prevalence-optimal " + num(prev) +
                      " (want 0.43), uniform " + num(uniform) + " (want 0.30)"};
}

struct ScalarRun {
    AggregateTable table;
    std::string csv;
};

ScalarRun run_table(const ScenarioSpec& spec)
{
    ScalarRun out;
    out.table = aggregate(spec, run_replicates(spec));
    out.csv = table_to_csv(spec, out.table);
    return out;
}

Outcome scalar_efficiency(const ScalarRun& run)
{
    const AggregateRow& r = run.table.find("sopt:1", "onestep", 1);
    const double re = r.re.value_or(0.0);
    return {run.table.failed == 0 && re >= 1.3, "RE(sopt) = " + num(re) + " over " + std::to_string(r.reps_ok) +
                                                     " replicates, failed = " + std::to_string(run.table.failed)};
}

// Improvement of a rule over uniform in each component, as 1 - Var(rule) / Var(uniform).
double min_improvement(const std::vector<const ReplicateRecord*>& rule, const std::vector<const ReplicateRecord*>& uni,
                       const std::vector<std::size_t>& idx)
{
    const Eigen::Index d = rule.front()->theta.size();
    double worst = 1e300;
    for (Eigen::Index j = 0; j < d; ++j) {
        auto var = [&](const std::vector<const ReplicateRecord*>& recs) {
            double mean = 0.0;
            for (auto i : idx) mean += recs[i]->theta(j);
            mean /= static_cast<double>(idx.size());
            double ss = 0.0;
            for (auto i : idx) ss += (recs[i]->theta(j) - mean) * (recs[i]->theta(j) - mean);
            return ss / static_cast<double>(idx.size() - 1);
        };
        worst = std::min(worst, 1.0 - var(rule) / var(uni));
    }
    return worst;
}

Outcome multi_efficiency()
{
    const ScenarioSpec spec = scenario("ate_multi_q1_n2000");
    const std::vector<ReplicateResult> results = run_replicates(spec);
    const AggregateTable table = aggregate(spec, results);

    std::ostringstream detail;
    bool pass = table.failed == 0;
    for (const std::string rule : {"copt", "gopt"}) {
        for (int j = 1; j <= 2; ++j) {
            const double re = table.find(rule, "onestep", j).re.value_or(0.0);
            detail << "RE(" << rule << "," << j << ") = " << num(re) << "; ";
            pass = pass && re >= 1.2;
        }
    }

    // paired bootstrap over replicates for the difference in minimum improvement
    std::vector<const ReplicateRecord*> uni, copt, gopt;
    for (const auto& res : results) {
        if (!res.ok) continue;
        for (const auto& rec : res.records) {
            if (rec.estimator != EstimatorKind::OneStep) continue;
            if (rec.rule == "uniform") uni.push_back(&rec);
            if (rec.rule == "copt") copt.push_back(&rec);
            if (rec.rule == "gopt") gopt.push_back(&rec);
        }
    }
    std::vector<std::size_t> all(uni.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double diff = min_improvement(gopt, uni, all) - min_improvement(copt, uni, all);
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    std::vector<double> boots;
    for (int b = 0; b < 400; ++b) {
        std::vector<std::size_t> idx(all.size());
        for (auto& i : idx) i = pick(rng);
        boots.push_back(min_improvement(gopt, uni, idx) - min_improvement(copt, uni, idx));
    }
    double mean = 0.0, ss = 0.0;
    for (double x : boots) mean += x / static_cast<double>(boots.size());
    for (double x : boots) ss += (x - mean) * (x - mean);
    const double noise = 2.0 * std::sqrt(ss / static_cast<double>(boots.size() - 1));
    pass = pass && diff >= -noise;
    detail << "min-improvement G - C = " << num(diff, 3) << " (noise " << num(noise, 3) << "), failed = " << table.failed;
    return {pass, detail.str()};
}

Outcome exact_budget()
{
    const Dgp dgp = Dgp::MeanMulti;
    const EstimationProblem problem = dgp_problem(dgp, 1);
    const Eigen::Index n = 2000;
    const double varpi = 0.3;
    const double kappa = kappa_default(varpi, static_cast<double>(n), dgp_kappa_constant(dgp, 1));
    const int draws = 500;
    std::vector<double> fraction(draws);
    std::vector<double> residual(draws);
    std::atomic<int> next{0};
    auto work = [&]() {
        for (int r = next++; r < draws; r = next++) {
            Rng rng(replicate_seed(404, static_cast<std::uint64_t>(r)));
            const SimData d = generate(dgp, n, 1, rng);
            TwoPhaseDataset data;
            data.V = d.V;
            data.U = d.U;
            data.kappa = kappa;
            data.R1 = draw_pilot(n, kappa, rng);
            data.R2.assign(static_cast<std::size_t>(n), 0);
            DesignOptions opt;
            opt.varpi = varpi;
            opt.kappa = kappa;
            opt.constrained = false;
            const RuleBundle bundle = estimate_rules(problem, data, opt);
            double worst = 0.0;
            for (const auto& rule : bundle.rules) {
                worst = std::max(worst, std::abs(budget_residual(rule.rule, data, varpi, kappa)));
            }
            residual[static_cast<std::size_t>(r)] = worst;
            draw_second_phase(data, bundle.rule("gopt"), rng);
            fraction[static_cast<std::size_t>(r)] = data.sampled_fraction();
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < worker_count(); ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    const double worst = *std::max_element(residual.begin(), residual.end());
    double mean = 0.0, ss = 0.0;
    for (double f : fraction) mean += f / draws;
    for (double f : fraction) ss += (f - mean) * (f - mean);
    const double se = std::sqrt(ss / (draws - 1) / draws);
    const bool pass = worst <= 1e-8 && std::abs(mean - varpi) <= 3.0 * se;
    return {pass, "max |residual| = " + num(worst, 3) + ", mean sampled fraction " + num(mean, 6) + " (SE " +
                      num(se, 3) + ")"};
}

Outcome loss_numerics()
{
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    auto problem = [&](Eigen::Index m, int dv, Vector& psi) {
        RowMatrix V(m, dv);
        psi.resize(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (int k = 0; k < dv; ++k) V(i, k) = u(rng);
            psi(i) = V(i, 0) + (0.5 + std::abs(V(i, 0))) * g(rng);
        }
        return build_basis(V).design(V);
    };
    auto random_vec = [&](Eigen::Index k, double scale) {
        Vector v(k);
        for (Eigen::Index i = 0; i < k; ++i) v(i) = scale * g(rng);
        return v;
    };

    double grad_err = 0.0;
    for (int k = 0; k < 50; ++k) {
        Vector psi;
        const Matrix P = problem(40, 1 + k % 3, psi);
        const Eigen::Index K = P.cols();
        const Vector g1 = random_vec(K, 1.0), g2 = random_vec(K, 1.0);
        const double ridge = 0.05, h = 1e-6;
        Vector fd1(K), fd2(K);
        for (Eigen::Index i = 0; i < K; ++i) {
            Vector e = Vector::Zero(K);
            e(i) = h;
            fd1(i) = (joint_loss(g1 + e, g2, psi, P, ridge) - joint_loss(g1 - e, g2, psi, P, ridge)) / (2 * h);
            fd2(i) = (joint_loss(g1, g2 + e, psi, P, ridge) - joint_loss(g1, g2 - e, psi, P, ridge)) / (2 * h);
        }
        const Vector a1 = joint_loss_grad_gamma1(g1, g2, psi, P, ridge);
        const Vector a2 = joint_loss_grad_gamma2(g1, g2, psi, P, ridge);
        grad_err = std::max({grad_err, (a1 - fd1).norm() / std::max(1.0, fd1.norm()),
                             (a2 - fd2).norm() / std::max(1.0, fd2.norm())});
    }

    bool monotone = true;
    for (int k = 0; k < 20; ++k) {
        Vector psi;
        const Matrix P = problem(300, 1 + k % 3, psi);
        const MomentFit fit = fit_moments(psi, P, k % 2 == 0 ? default_ridge(1 + k % 3) : 1e-3);
        for (std::size_t i = 1; i < fit.loss_history.size(); ++i) {
            monotone = monotone && fit.loss_history[i] <= fit.loss_history[i - 1];
        }
    }

    int convex_ok = 0;
    for (int k = 0; k < 100; ++k) {
        Vector psi;
        const Matrix P = problem(30, 1 + k % 2, psi);
        const Eigen::Index K = P.cols();
        const Vector a1 = random_vec(K, 2.0), a2 = random_vec(K, 2.0);
        // the loss is convex in each block: move one block per segment
        const Vector b1 = k % 2 == 0 ? random_vec(K, 2.0) : a1;
        const Vector b2 = k % 2 == 0 ? a2 : random_vec(K, 2.0);
        const double ridge = k % 4 < 2 ? 0.0 : 0.1;
        const double fa = joint_loss(a1, a2, psi, P, ridge), fb = joint_loss(b1, b2, psi, P, ridge);
        const double fm = joint_loss((a1 + b1) / 2, (a2 + b2) / 2, psi, P, ridge);
        if (fm <= (fa + fb) / 2 + 1e-12 * (1.0 + std::abs(fa) + std::abs(fb))) ++convex_ok;
    }
    const bool pass = grad_err <= 1e-5 && monotone && convex_ok == 100;
    return {pass, "gradient rel. error " + num(grad_err, 3) + ", loss non-increasing: " + (monotone ? "yes" : "no") +
                      ", blockwise convex segments " + std::to_string(convex_ok) + "/100"};
}

Outcome mean_zero()
{
    Rng rng(606);
    bool pass = true;
    std::ostringstream detail;
    for (const auto& s : truth::all(100000, rng)) {
        const double z = truth::max_z(s.values);
        pass = pass && z <= 4.0;
        detail << s.name << " |z| " << num(z, 3) << "; ";
    }
    return {pass, detail.str()};
}

Outcome coverage(const ScalarRun& n2000, const ScalarRun& n5000)
{
    const double c1 = n2000.table.find("sopt:1", "onestep", 1).coverage;
    const double c2 = n5000.table.find("sopt:1", "onestep", 1).coverage;
    const double u1 = n2000.table.find("uniform", "onestep", 1).coverage;
    const double u2 = n5000.table.find("uniform", "onestep", 1).coverage;
    auto ok = [](double c) { return c >= 0.92 && c <= 0.98; };
    return {ok(c1) && ok(c2), "sopt coverage " + num(c1, 3) + " (n=2000), " + num(c2, 3) +
                                   " (n=5000); uniform " + num(u1, 3) + ", " + num(u2, 3)};
}

Outcome determinism()
{
    const ScenarioSpec spec = scenario("mean_multi_quick");
    const auto dir = std::filesystem::temp_directory_path() / "twophase_acceptance";
    std::filesystem::create_directories(dir);
    std::vector<std::string> bytes;
    for (int threads : {1, 1, worker_count() + 1}) {
        const auto path = dir / ("run" + std::to_string(bytes.size()) + ".csv");
        {
            std::ofstream out(path, std::ios::binary);
            out << table_to_csv(spec, run_scenario(spec, threads));
        }
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        bytes.push_back(ss.str());
    }
    std::filesystem::remove_all(dir);
    const bool same = bytes[0] == bytes[1] && bytes[0] == bytes[2] && !bytes[0].empty();
    return {same, same ? "three runs byte-identical (" + std::to_string(bytes[0].size()) + " bytes)" : "outputs differ"};
}

} // namespace

int main()
{
    int failures = 0;
    auto report = [&](int id, const std::string& name, const Outcome& o, double seconds) {
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " -- " << o.detail << " ["
                  << num(seconds, 3) << " s]" << std::endl;
    };
    auto timed = [&](int id, const std::string& name, auto&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report(id, name, o, s);
    };

    timed(1, "closed-form optimal rule vs exhaustive grid", closed_form_optimality);
    timed(2, "dual optimum vs primal brute force", dual_primal_equivalence);
    timed(3, "diagnostic-test specificity bounds", classification_numbers);

    ScalarRun n2000, n5000;
    timed(4, "scalar treatment effect efficiency", [&]() {
        n2000 = run_table(scenario("ate_scalar_q1_n2000"));
        return scalar_efficiency(n2000);
    });

    timed(5, "two-contrast treatment effect maximin efficiency", multi_efficiency);
    timed(6, "exact budget", exact_budget);
    timed(7, "joint loss numerics", loss_numerics);
    timed(8, "influence functions centred at the truth", mean_zero);
    timed(9, "one-step interval coverage", [&]() {
        if (n2000.csv.empty()) n2000 = run_table(scenario("ate_scalar_q1_n2000"));
        n5000 = run_table(scenario("ate_scalar_q1_n5000"));
        return coverage(n2000, n5000);
    });
    timed(10, "determinism", determinism);

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
