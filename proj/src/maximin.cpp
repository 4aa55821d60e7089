#include "twophase/maximin.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace twophase {

Improvement relative_improvement(const EmpiricalBound& bound, const Vector& rho)
{
    for (int j = 0; j < bound.dim(); ++j) {
        if (!(bound.b(j) > 0.0)) throw NumericalError("improvement: component has a zero efficiency bound");
    }
    Improvement out;
    out.components = (bound.xi - bound.variance_term(rho)).cwiseQuotient(bound.b);
    out.min = out.components.minCoeff();
    return out;
}

namespace {

constexpr double kTieTol = 1e-12;

// True when candidate (value, w) beats incumbent for a maximisation, with ties
// broken by smaller Euclidean norm, then lexicographically.
bool better(double value, const Vector& w, double best_value, const Vector& best_w)
{
    if (value > best_value + kTieTol) return true;
    if (value < best_value - kTieTol) return false;
    const double n1 = w.squaredNorm();
    const double n2 = best_w.squaredNorm();
    if (n1 < n2 - kTieTol) return true;
    if (n1 > n2 + kTieTol) return false;
    return std::lexicographical_compare(w.data(), w.data() + w.size(), best_w.data(), best_w.data() + best_w.size());
}

enum class Region { Simplex, Capped };

Vector project_simplex(const Vector& v)
{
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) theta = t;
    }
    return (v.array() - theta).max(0.0).matrix();
}

Vector project(const Vector& v, Region region)
{
    if (region == Region::Capped) {
        Vector c = v.cwiseMax(0.0);
        if (c.sum() <= 1.0) return c;
    }
    return project_simplex(v);
}

void enumerate_grid(int d, int N, Region region, const std::function<void(const Vector&)>& visit)
{
    std::vector<int> k(static_cast<std::size_t>(d), 0);
    Vector w(d);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == d - 1) {
            const int lo = region == Region::Simplex ? left : 0;
            for (int last = lo; last <= left; ++last) {
                k[static_cast<std::size_t>(pos)] = last;
                for (int j = 0; j < d; ++j) w(j) = static_cast<double>(k[static_cast<std::size_t>(j)]) / N;
                visit(w);
            }
            return;
        }
        for (int v = 0; v <= left; ++v) {
            k[static_cast<std::size_t>(pos)] = v;
            rec(pos + 1, left - v);
        }
    };
    rec(0, N);
}

Vector local_refine(int d, Region region, const std::function<double(const Vector&)>& f, Vector best_w,
                    double* best_value, double start_step, double min_step);

// Grid search followed by local moves with a shrinking step.
Vector grid_maximise(int d, Region region, const std::function<double(const Vector&)>& f,
                     const MaximinOptions& opt, double* best_value)
{
    const int N = static_cast<int>(std::lround(1.0 / opt.grid_step));
    Vector best_w;
    double best = -std::numeric_limits<double>::infinity();
    enumerate_grid(d, N, region, [&](const Vector& w) {
        const double val = f(w);
        if (best_w.size() == 0 || better(val, w, best, best_w)) {
            best = val;
            best_w = w;
        }
    });

    best_w = local_refine(d, region, f, best_w, &best, opt.grid_step / 2.0, opt.refine_tol);
    if (best_value) *best_value = best;
    return best_w;
}

// Coordinate-pair moves with a halving step, accepting strict improvements.
Vector local_refine(int d, Region region, const std::function<double(const Vector&)>& f, Vector best_w,
                    double* best_value, double start_step, double min_step)
{
    double best = *best_value;
    double delta = start_step;
    while (delta >= min_step) {
        bool moved = true;
        int guard = 0;
        while (moved && guard++ < 10000) {
            moved = false;
            std::vector<Vector> candidates;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    if (i == j) continue;
                    Vector w = best_w;
                    w(i) += delta;
                    w(j) -= delta;
                    candidates.push_back(w);
                }
                if (region == Region::Capped) {
                    Vector up = best_w;
                    up(i) += delta;
                    candidates.push_back(up);
                    Vector down = best_w;
                    down(i) -= delta;
                    candidates.push_back(down);
                }
            }
            for (auto& w : candidates) {
                if (w.minCoeff() < -1e-15) continue;
                w = w.cwiseMax(0.0);
                if (w.sum() > 1.0 + 1e-12) continue;
                const double val = f(w);
                if (val > best + kTieTol) {
                    best = val;
                    best_w = w;
                    moved = true;
                    break;
                }
            }
        }
        delta /= 2.0;
    }
    *best_value = best;
    return best_w;
}

// Projected sub/supergradient ascent with c / sqrt(t) steps and iterate
// averaging; returns the better of the average and the best iterate.
Vector subgradient_maximise(int d, Region region, const std::function<double(const Vector&)>& f,
                            const std::function<Vector(const Vector&)>& supergrad, const MaximinOptions& opt,
                            double* best_value)
{
    Vector w = region == Region::Simplex ? Vector::Constant(d, 1.0 / d) : Vector::Zero(d);
    Vector avg = Vector::Zero(d);
    Vector best_w = w;
    double best = f(w);
    const double c = 0.5;
    for (int t = 1; t <= opt.subgradient_iters; ++t) {
        Vector g = supergrad(w);
        const double norm = g.norm();
        if (norm == 0.0) break;
        w = project(w + c / std::sqrt(static_cast<double>(t)) * g / norm, region);
        avg += (w - avg) / static_cast<double>(t);
        const double val = f(w);
        if (better(val, w, best, best_w)) {
            best = val;
            best_w = w;
        }
    }
    const double avg_val = f(avg);
    if (better(avg_val, avg, best, best_w)) {
        best = avg_val;
        best_w = avg;
    }
    if (best_value) *best_value = best;
    return best_w;
}

Vector mixture_values(const EmpiricalBound& bound, const Matrix& component_rho, const Vector& w)
{
    Vector rho = bound.rho0;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        if (w(k) != 0.0) rho += w(k) * (component_rho.col(k) - bound.rho0);
    }
    return rho;
}

} // namespace

MaximinSolution solve_constrained_maximin(const EmpiricalBound& bound, const Matrix& component_rho,
                                          const MaximinOptions& options)
{
    const int d = bound.dim();
    require(component_rho.rows() == bound.points(), "constrained maximin: rule table has wrong row count");
    require(component_rho.cols() == d, "constrained maximin: need one component rule per parameter");
    require((bound.rho0.array() > 0.0).all(), "constrained maximin: benchmark rule must be positive");

    auto objective = [&](const Vector& w) { return relative_improvement(bound, mixture_values(bound, component_rho, w)).min; };

    double best = 0.0;
    Vector w;
    if (d <= options.grid_max_dim) {
        w = grid_maximise(d, Region::Capped, objective, options, &best);
    } else {
        auto supergrad = [&](const Vector& wv) {
            const Vector rho = mixture_values(bound, component_rho, wv);
            const Improvement imp = relative_improvement(bound, rho);
            Eigen::Index j = 0;
            imp.components.minCoeff(&j);
            Vector g = Vector::Zero(d);
            for (Eigen::Index i = 0; i < bound.points(); ++i) {
                const double s2 = bound.sigma(i, j) * bound.sigma(i, j);
                if (s2 == 0.0 || bound.weight(i) == 0.0) continue;
                const double scale = bound.weight(i) * s2 / (rho(i) * rho(i)) / bound.b(j);
                for (int k = 0; k < d; ++k) g(k) += scale * (component_rho(i, k) - bound.rho0(i));
            }
            return g;
        };
        w = subgradient_maximise(d, Region::Capped, objective, supergrad, options, &best);
    }

    MaximinSolution sol;
    sol.w = w;
    sol.rho = mixture_values(bound, component_rho, w);
    sol.improvement = relative_improvement(bound, sol.rho);
    sol.objective = sol.improvement.min;
    return sol;
}

// ---------------------------------------------------------------------------

GlobalDual::GlobalDual(const EmpiricalBound& bound, Budget budget, Vector scale)
    : bound_(bound), budget_(std::move(budget)), b_(bound.b.cwiseProduct(scale))
{
    require(budget_.weight.size() == bound.points(), "global maximin: budget weights have wrong length");
    require(budget_.target > 0.0, "global maximin: budget target must be positive");
    require((b_.array() > 0.0).all(), "global maximin: component bounds must be positive");
}

Vector GlobalDual::score_coef(const Vector& w) const
{
    return w.cwiseQuotient(b_);
}

std::vector<double> GlobalDual::combined_sigma(const Vector& w) const
{
    const Vector coef = score_coef(w);
    std::vector<double> s(static_cast<std::size_t>(bound_.points()));
    for (Eigen::Index i = 0; i < bound_.points(); ++i) {
        s[static_cast<std::size_t>(i)] = std::sqrt(coef.dot(bound_.sigma.row(i).transpose().cwiseAbs2()));
    }
    return s;
}

Threshold GlobalDual::threshold(const Vector& w) const
{
    std::vector<long long> key(static_cast<std::size_t>(w.size()));
    for (Eigen::Index j = 0; j < w.size(); ++j) key[static_cast<std::size_t>(j)] = std::llround(w(j) * 1e12);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const std::vector<double> s = combined_sigma(w);
    const Threshold t = solve_threshold(s, std::span<const double>(budget_.weight.data(), s.size()), budget_.target);
    cache_.emplace(std::move(key), t);
    return t;
}

double GlobalDual::value(const Vector& w) const
{
    const std::vector<double> s = combined_sigma(w);
    double linear = w.dot(bound_.xi.cwiseQuotient(b_));
    double smax = 0.0;
    for (Eigen::Index i = 0; i < bound_.points(); ++i) {
        if (budget_.weight(i) > 0.0) smax = std::max(smax, s[static_cast<std::size_t>(i)]);
    }
    if (smax == 0.0) return linear;
    const Threshold t = threshold(w);
    double inner = 0.0;
    for (Eigen::Index i = 0; i < bound_.points(); ++i) {
        const double si = s[static_cast<std::size_t>(i)];
        inner += bound_.weight(i) * si * std::max(si, t.tau);
    }
    return linear - inner;
}

Vector GlobalDual::rho(const Vector& w, Threshold* threshold_out) const
{
    const Threshold t = threshold(w);
    if (threshold_out) *threshold_out = t;
    return truncated_values(combined_sigma(w), t);
}

namespace {

MaximinSolution solve_dual(const EmpiricalBound& bound, const Budget& budget, const Vector& scale,
                           const MaximinOptions& options)
{
    const int d = bound.dim();
    GlobalDual dual(bound, budget, scale);
    auto neg_g = [&](const Vector& w) { return -dual.value(w); };

    Vector w;
    if (d == 1) {
        w = Vector::Ones(1);
    } else if (d <= options.grid_max_dim) {
        w = grid_maximise(d, Region::Simplex, neg_g, options, nullptr);
    } else {
        // the gradient of G is the vector of scaled component improvements
        auto ascent = [&](const Vector& wv) {
            const Vector rho = dual.rho(wv);
            return Vector(-(bound.xi - bound.variance_term(rho)).cwiseQuotient(bound.b.cwiseProduct(scale)));
        };
        w = subgradient_maximise(d, Region::Simplex, neg_g, ascent, options, nullptr);
    }

    // The dual is smooth near its optimum, so its maximiser is only resolved to
    // about the square root of the value tolerance. Polishing on the primal
    // objective, which has a kink there, recovers the remaining digits.
    if (d > 1) {
        auto primal = [&](const Vector& wv) {
            return relative_improvement(bound, dual.rho(wv)).components.cwiseQuotient(scale).minCoeff();
        };
        double val = primal(w);
        w = local_refine(d, Region::Simplex, primal, w, &val, options.polish_step, options.polish_tol);
    }

    MaximinSolution sol;
    sol.w = w;
    sol.rho = dual.rho(w, &sol.threshold);
    sol.score_coef = dual.score_coef(w);
    sol.improvement = relative_improvement(bound, sol.rho);
    sol.objective = sol.improvement.components.cwiseQuotient(scale).minCoeff();
    return sol;
}

} // namespace

MaximinSolution solve_global_maximin(const EmpiricalBound& bound, const Budget& budget, const MaximinOptions& options)
{
    return solve_dual(bound, budget, Vector::Ones(bound.dim()), options);
}

MaximinSolution solve_priority_maximin(const EmpiricalBound& bound, const Budget& budget, const Vector& a,
                                       const MaximinOptions& options)
{
    require(a.size() == bound.dim(), "priority maximin: one priority weight per component required");
    require((a.array() > 0.0).all(), "priority maximin: priority weights must be positive");
    require(std::abs(a.sum() - 1.0) < 1e-9, "priority maximin: priority weights must sum to one");
    return solve_dual(bound, budget, a, options);
}

// ---------------------------------------------------------------------------

BruteForceResult primal_brute_force(const DiscreteLaw& law, const Vector& rho0, double varpi, double step,
                                    int refine_levels)
{
    const Eigen::Index k = law.prob.size();
    const int d = static_cast<int>(law.sigma.cols());
    require(k >= 1, "brute force: empty support");
    require(k <= 6, "brute force: support larger than 6 points is not enumerable");
    require(law.sigma.rows() == k && law.pi.rows() == k && law.pi.cols() == d, "brute force: table shapes differ");
    require(step > 0.0 && step <= 1.0, "brute force: grid step must lie in (0,1]");
    require(varpi > 0.0, "brute force: budget must be positive");
    const int levels = static_cast<int>(std::lround(1.0 / step));
    if (std::pow(static_cast<double>(levels), static_cast<double>(k - 1)) > 5e8) {
        throw InvalidInput("brute force: grid too large to enumerate");
    }

    const EmpiricalBound bound = empirical_bound(law.sigma, law.pi, rho0, law.prob);
    for (int j = 0; j < d; ++j) {
        if (!(bound.b(j) > 0.0)) throw NumericalError("brute force: component has a zero efficiency bound");
    }

    BruteForceResult best;
    best.value = -std::numeric_limits<double>::infinity();
    Vector rho(k);
    Vector partial = Vector::Zero(d);

    // candidate grids per free coordinate
    std::vector<std::vector<double>> grid(static_cast<std::size_t>(k));
    auto set_uniform_grid = [&](double h) {
        for (Eigen::Index i = 0; i + 1 < k; ++i) {
            auto& g = grid[static_cast<std::size_t>(i)];
            g.clear();
            for (int m = 1; m <= levels; ++m) g.push_back(std::min(1.0, m * h));
        }
    };
    set_uniform_grid(step);

    std::function<void(Eigen::Index, double, const Vector&)> rec = [&](Eigen::Index i, double spent, const Vector& acc) {
        if (i == k - 1) {
            const double left = varpi - spent;
            const double last = std::min(1.0, left / law.prob(i));
            const bool zero_var = law.sigma.row(i).cwiseAbs().maxCoeff() == 0.0;
            if (!(last > 0.0) && !zero_var) return;
            rho(i) = std::max(last, 0.0);
            Vector var = acc;
            if (!zero_var) var += law.prob(i) * law.sigma.row(i).transpose().cwiseAbs2() / rho(i);
            const Vector f = (bound.xi - var).cwiseQuotient(bound.b);
            const double val = f.minCoeff();
            if (val > best.value + kTieTol) {
                best.value = val;
                best.rho = rho;
                best.improvement = Improvement{f, val};
            }
            return;
        }
        for (double r : grid[static_cast<std::size_t>(i)]) {
            const double cost = spent + law.prob(i) * r;
            if (cost > varpi + 1e-15) break;
            rho(i) = r;
            rec(i + 1, cost, acc + law.prob(i) * law.sigma.row(i).transpose().cwiseAbs2() / r);
        }
    };
    rec(0, 0.0, partial);
    if (!std::isfinite(best.value)) throw NumericalError("brute force: no feasible rule on the grid");

    double h = step;
    for (int level = 0; level < refine_levels; ++level) {
        const double fine = h / 10.0;
        const Vector centre = best.rho;
        for (Eigen::Index i = 0; i + 1 < k; ++i) {
            auto& g = grid[static_cast<std::size_t>(i)];
            g.clear();
            for (int m = -10; m <= 10; ++m) {
                const double r = centre(i) + m * fine;
                if (r >= fine * 0.5 && r <= 1.0 + 1e-15) g.push_back(std::min(r, 1.0));
            }
        }
        rec(0, 0.0, partial);
        h = fine;
    }
    return best;
}

} // namespace twophase
