#include "twophase/classification.hpp"
#include "twophase/commands.hpp"
#include "twophase/eif.hpp"
#include "twophase/moments.hpp"
#include "twophase/pipeline.hpp"
#include "twophase/rules.hpp"
#include "twophase/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace twophase;

namespace {

Indicator to_indicator(const std::vector<int>& v)
{
    Indicator out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] ? 1 : 0;
    return out;
}

py::dict report_dict(const EstimateReport& r)
{
    py::dict d;
    d["theta"] = r.theta;
    d["se"] = r.se;
    d["ci_lo"] = r.ci_lo;
    d["ci_hi"] = r.ci_hi;
    d["estimator"] = to_string(r.kind);
    d["rule"] = r.rule_used;
    d["sampled_fraction"] = r.sampled_fraction;
    return d;
}

// Pilot draw, rule design, second-phase draw and estimation on a fully
// observed table; unsampled second-phase rows are hidden before estimation.
py::dict run_pipeline(const EstimationProblem& problem, const RowMatrix& V, const RowMatrix& U, double varpi,
                      double kappa, const std::string& rule, std::uint64_t seed,
                      const std::vector<std::string>& estimators)
{
    Rng rng(seed);
    TwoPhaseDataset data;
    data.V = V;
    data.U = U;
    data.kappa = kappa;
    data.R1 = draw_pilot(V.rows(), kappa, rng);
    data.R2.assign(static_cast<std::size_t>(V.rows()), 0);
    TwoPhaseDataset pilot = data;
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (!data.R1[static_cast<std::size_t>(i)]) pilot.U.row(i).setConstant(std::nan(""));
    }
    DesignOptions opt;
    opt.varpi = varpi;
    opt.kappa = kappa;
    const RuleBundle bundle = estimate_rules(problem, pilot, opt);
    draw_second_phase(data, bundle.rule(rule), rng);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (!data.observed(i)) data.U.row(i).setConstant(std::nan(""));
    }
    std::vector<EstimatorKind> kinds;
    for (const auto& e : estimators) kinds.push_back(parse_estimator(e));
    py::list reports;
    for (const auto& r : run_estimators(problem, data, bundle.eta, *bundle.models, bundle.theta_pilot, kinds, rule)) {
        reports.append(report_dict(r));
    }
    py::dict out;
    out["reports"] = reports;
    out["theta_pilot"] = bundle.theta_pilot;
    out["budget_residual"] = budget_residual(bundle.rule(rule), data, varpi, kappa);
    out["sampled_fraction"] = data.sampled_fraction();
    return out;
}

py::dict design_rules(const EstimationProblem& problem, const RowMatrix& V, const RowMatrix& U,
                      const std::vector<int>& R1, double varpi, double kappa)
{
    TwoPhaseDataset data;
    data.V = V;
    data.U = U;
    data.R1 = to_indicator(R1);
    data.R2.assign(R1.size(), 0);
    data.kappa = kappa;
    DesignOptions opt;
    opt.varpi = varpi;
    opt.kappa = kappa;
    const RuleBundle bundle = estimate_rules(problem, data, opt);
    py::dict values;
    py::dict residuals;
    for (const auto& r : bundle.rules) {
        values[py::str(r.name)] = r.rule.eval_all(V);
        residuals[py::str(r.name)] = budget_residual(r.rule, data, varpi, kappa);
    }
    py::dict out;
    out["rule_values"] = values;
    out["budget_residual"] = residuals;
    out["theta_pilot"] = bundle.theta_pilot;
    out["sigma"] = bundle.sigma;
    out["pi"] = bundle.pi;
    if (bundle.global) out["gopt_weights"] = bundle.global->w;
    if (bundle.constrained) out["copt_weights"] = bundle.constrained->w;
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Two-phase sampling design: optimal and maximin rules, estimation and simulation";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<EstimationProblem>(m, "EstimationProblem")
        .def_static("mean", &EstimationProblem::mean, py::arg("dim_y"), py::arg("dim_z"))
        .def_static("linear_coef", &EstimationProblem::linear_coef, py::arg("dim_x"), py::arg("dim_z"))
        .def_static("ate_binary", &EstimationProblem::ate_binary, py::arg("dim_x"), py::arg("dim_z"),
                    py::arg("known_propensity") = py::none())
        .def_static("ate_multi", &EstimationProblem::ate_multi, py::arg("treatments"), py::arg("dim_x"),
                    py::arg("dim_z"), py::arg("known_probs") = py::none())
        .def_static("classification", &EstimationProblem::classification)
        .def_property_readonly("name", &EstimationProblem::name)
        .def_property_readonly("param_dim", &EstimationProblem::param_dim)
        .def_property_readonly("v_dim", &EstimationProblem::v_dim)
        .def_property_readonly("u_dim", &EstimationProblem::u_dim)
        .def(
            "solve_theta_pilot",
            [](const EstimationProblem& p, const RowMatrix& V, const RowMatrix& U) {
                return p.solve_theta_pilot(V, U, p.fit_nuisance(V, U));
            },
            py::arg("V"), py::arg("U"), "Fit nuisances on the rows given and solve the estimating equation");

    m.def(
        "psi_mean", [](const std::vector<double>& u, const Vector& theta) { return psi_mean(u, theta); },
        py::arg("u"), py::arg("theta"));
    m.def("psi_ate_binary", &psi_ate_binary, py::arg("y"), py::arg("t"), py::arg("pi"), py::arg("m0"), py::arg("m1"),
          py::arg("theta"));
    m.def("psi_classification", &psi_classification, py::arg("x"), py::arg("y"), py::arg("theta"));
    m.def("two_phase_eif", &two_phase_eif, py::arg("psi"), py::arg("pi_v"), py::arg("rho_v"), py::arg("r"));

    m.def(
        "solve_threshold",
        [](const std::vector<double>& sigma, double target, std::optional<std::vector<double>> weight) {
            const Threshold t = weight ? solve_threshold(sigma, *weight, target) : solve_threshold(sigma, target);
            return t.tau;
        },
        py::arg("sigma"), py::arg("target"), py::arg("weight") = py::none(),
        "Threshold tau with sum_i w_i min(sigma_i / tau, 1) = target; 0 when the budget saturates");

    m.def("kappa_default", &kappa_default, py::arg("varpi"), py::arg("n"), py::arg("c"));

    m.def(
        "fit_moments",
        [](const Matrix& psi, const RowMatrix& V, double ridge) {
            MomentFitOptions opt;
            opt.ridge = ridge;
            std::vector<std::vector<double>> hist;
            auto models = fit_moment_models(psi, V, opt, &hist);
            py::dict out;
            out["mean"] = models->mean_table(V);
            out["sd"] = models->sd_table(V);
            out["loss_history"] = hist;
            return out;
        },
        py::arg("psi"), py::arg("V"), py::arg("ridge") = -1.0,
        "Fit conditional mean and standard deviation models; returns fitted values on V");

    m.def(
        "generate",
        [](const std::string& dgp, Eigen::Index n, int q, std::uint64_t seed) {
            Rng rng(seed);
            const SimData d = generate(parse_dgp(dgp), n, q, rng);
            return py::make_tuple(d.V, d.U);
        },
        py::arg("dgp"), py::arg("n"), py::arg("q"), py::arg("seed"));

    m.def("design_rules", &design_rules, py::arg("problem"), py::arg("V"), py::arg("U"), py::arg("R1"),
          py::arg("varpi"), py::arg("kappa"));
    m.def("run_pipeline", &run_pipeline, py::arg("problem"), py::arg("V"), py::arg("U"), py::arg("varpi"),
          py::arg("kappa"), py::arg("rule") = "gopt", py::arg("seed") = 1,
          py::arg("estimators") = std::vector<std::string>{"onestep"});

    m.def(
        "classification_demo",
        [](double varpi) {
            const ClassificationDemo demo = classification_demo(varpi, (Vector(3) << 0.2, 0.8, 0.6).finished());
            py::dict rows;
            for (const auto& r : demo.rows) {
                py::dict d;
                d["rho"] = r.rho;
                d["bound"] = r.bound;
                d["improvement"] = r.improvement;
                rows[py::str(r.rule)] = d;
            }
            return rows;
        },
        py::arg("varpi") = 0.3);

    m.def(
        "run_scenario",
        [](const std::map<std::string, std::string>& config, int threads) {
            KvConfig cfg;
            for (const auto& [k, v] : config) cfg.set(k, v);
            const ScenarioSpec spec = ScenarioSpec::from_config(cfg);
            py::gil_scoped_release release;
            const AggregateTable table = run_scenario(spec, threads);
            return table_to_csv(spec, table);
        },
        py::arg("config"), py::arg("threads") = 1, "Run a scenario given as key/value strings; returns the CSV text");
}
