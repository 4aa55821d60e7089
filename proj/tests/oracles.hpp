#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the solvers they are used to check.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

/// Discrete law with probabilities a_i / denom (integers), so that grid
/// budgets become integer knapsack capacities.
struct RationalLaw {
    std::vector<int> numer;
    int denom = 0;
    std::vector<double> sigma;

    double prob(std::size_t i) const { return static_cast<double>(numer[i]) / denom; }
};

inline RationalLaw random_law(std::mt19937_64& rng, int max_support, int denom)
{
    std::uniform_int_distribution<int> size_dist(2, max_support);
    const int k = size_dist(rng);
    RationalLaw law;
    law.denom = denom;
    // random composition of denom into k positive parts
    std::vector<int> cuts;
    std::uniform_int_distribution<int> cut_dist(1, denom - 1);
    while (static_cast<int>(cuts.size()) < k - 1) {
        const int c = cut_dist(rng);
        if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    int prev = 0;
    for (int c : cuts) {
        law.numer.push_back(c - prev);
        prev = c;
    }
    law.numer.push_back(denom - prev);
    std::uniform_real_distribution<double> sd(0.05, 3.0);
    for (int i = 0; i < k; ++i) law.sigma.push_back(sd(rng));
    return law;
}

/// Exact minimum of sum_i p_i sigma_i^2 / rho_i over rules with every rho_i on
/// the grid {1/levels, ..., 1} and sum_i p_i rho_i <= varpi, by dynamic
/// programming over the integer budget sum_i numer_i * m_i <= varpi * denom * levels.
inline double grid_minimum(const RationalLaw& law, double varpi, int levels)
{
    const long long cap = static_cast<long long>(std::floor(varpi * law.denom * levels + 1e-9));
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(static_cast<std::size_t>(cap + 1), inf);
    best[0] = 0.0;
    for (std::size_t i = 0; i < law.numer.size(); ++i) {
        std::vector<double> next(best.size(), inf);
        const double p = law.prob(i);
        const double s2 = law.sigma[i] * law.sigma[i];
        for (int m = 1; m <= levels; ++m) {
            const long long cost = static_cast<long long>(law.numer[i]) * m;
            if (cost > cap) break;
            const double add = p * s2 / (static_cast<double>(m) / levels);
            for (long long used = 0; used + cost <= cap; ++used) {
                if (best[static_cast<std::size_t>(used)] == inf) continue;
                double& slot = next[static_cast<std::size_t>(used + cost)];
                slot = std::min(slot, best[static_cast<std::size_t>(used)] + add);
            }
        }
        best.swap(next);
    }
    return *std::min_element(best.begin(), best.end());
}

/// Bounds of the prevalence / sensitivity / specificity triple enumerated from
/// the joint law of (X, Y) under rule values rho = (rho(X=0), rho(X=1)).
struct TripleBounds {
    double prevalence;
    double sensitivity;
    double specificity;
};

inline TripleBounds classification_bounds(double th1, double th2, double th3, double rho0, double rho1)
{
    // joint probabilities P(X = x, Y = y)
    const double p[2][2] = {{(1 - th1) * th3, th1 * (1 - th2)}, {(1 - th1) * (1 - th3), th1 * th2}};
    auto psi = [&](int x, int y, int j) {
        switch (j) {
        case 0: return y - th1;
        case 1: return (x - th2) * y / th1;
        default: return (1 - x - th3) * (1 - y) / (1 - th1);
        }
    };
    double out[3];
    for (int j = 0; j < 3; ++j) {
        double var_term = 0.0;
        double mean_pi = 0.0;
        double sq_pi = 0.0;
        for (int x = 0; x < 2; ++x) {
            const double px = p[x][0] + p[x][1];
            double m1 = 0.0;
            double m2 = 0.0;
            for (int y = 0; y < 2; ++y) {
                const double v = psi(x, y, j);
                m1 += p[x][y] / px * v;
                m2 += p[x][y] / px * v * v;
            }
            const double cond_var = m2 - m1 * m1;
            var_term += px * cond_var / (x == 0 ? rho0 : rho1);
            mean_pi += px * m1;
            sq_pi += px * m1 * m1;
        }
        out[j] = var_term + sq_pi - mean_pi * mean_pi;
    }
    return {out[0], out[1], out[2]};
}

} // namespace oracle
