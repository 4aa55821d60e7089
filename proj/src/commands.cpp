#include "twophase/commands.hpp"

#include "twophase/classification.hpp"
#include "twophase/dataset.hpp"
#include "twophase/pipeline.hpp"
#include "twophase/rule_io.hpp"
#include "twophase/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace twophase {

namespace {

std::string fixed(double x, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string join_list(const std::vector<std::string>& v)
{
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
}

std::string join_doubles(const std::vector<double>& v)
{
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
    return s;
}

bool contains(const std::vector<std::string>& v, const std::string& x)
{
    return std::find(v.begin(), v.end(), x) != v.end();
}

template <class F>
int guarded(std::ostream& log, F&& body)
{
    try {
        return body();
    } catch (const InvalidInput& e) {
        log << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
}

} // namespace

int cmd_simulate(const SimulateArgs& args, std::ostream& log)
{
    return guarded(log, [&] {
        require(!args.out.empty(), "simulate: --out is required");
        KvConfig cfg = KvConfig::load(args.scenario);
        if (args.seed) cfg.set("seed", std::to_string(*args.seed));
        if (args.varpi) cfg.set("varpi", format_double(*args.varpi));
        if (args.kappa_c) cfg.set("kappa_c", format_double(*args.kappa_c));
        if (args.rules) cfg.set("rules", join_list(*args.rules));
        if (args.priority) cfg.set("priority", join_doubles(*args.priority));
        const ScenarioSpec spec = ScenarioSpec::from_config(cfg);
        const AggregateTable table = run_scenario(spec, args.threads);
        std::ofstream out(args.out);
        if (!out) throw InvalidInput("cannot write " + args.out);
        out << table_to_csv(spec, table);
        out.close();
        log << "wrote " << table.rows.size() << " rows to " << args.out << '\n';
        if (table.failed > 0) {
            log << "error: " << table.failed << " replicate(s) failed\n";
            for (const auto& m : table.failure_messages) log << "  " << m << '\n';
            return kExitCheckFailed;
        }
        return kExitOk;
    });
}

int cmd_design(const DesignArgs& args, std::ostream& log)
{
    return guarded(log, [&] {
        require(!args.out.empty(), "design: --out is required");
        const DatasetSchema schema = DatasetSchema::load(args.schema);
        require(!schema.r1_column.empty(), "design: the schema must name the pilot indicator column (r1_column)");
        const CsvTable table = read_csv(args.data);
        // before the draw the second-phase indicator column may not exist yet
        DatasetSchema input_schema = schema;
        if (std::find(table.header.begin(), table.header.end(), schema.r2_column) == table.header.end()) {
            input_schema.r2_column.clear();
        }
        TwoPhaseDataset data = dataset_from_csv(table, input_schema);
        const EstimationProblem problem = schema.make_problem();
        const auto n = static_cast<double>(data.size());
        require(data.pilot_count() > 0, "design: no pilot rows (R1 = 1)");

        const double c = args.kappa_c.value_or(static_cast<double>(data.V.cols()));
        const double kappa = args.kappa ? *args.kappa : kappa_default(args.varpi, n, c);
        const double pilot_fraction = static_cast<double>(data.pilot_count()) / n;
        require(args.varpi > kappa, "design: varpi must exceed the pilot fraction kappa");
        require(args.varpi > pilot_fraction, "design: varpi must exceed the observed pilot fraction");
        data.kappa = kappa;

        DesignOptions opt;
        opt.varpi = args.varpi;
        opt.kappa = kappa;
        opt.constrained = contains(args.rules, "copt");
        opt.global = contains(args.rules, "gopt");
        if (args.priority) {
            opt.priority = Eigen::Map<const Vector>(args.priority->data(), static_cast<Eigen::Index>(args.priority->size()));
        }
        const RuleBundle bundle = estimate_rules(problem, data, opt);

        std::vector<std::string> comments{"design of second-phase sampling rules",
                                          "data = " + args.data,
                                          "schema = " + args.schema,
                                          "varpi = " + format_double(args.varpi),
                                          "kappa = " + format_double(kappa),
                                          "kappa_c = " + format_double(c),
                                          "rules = " + join_list(args.rules),
                                          "seed = " + std::to_string(args.seed)};
        if (args.priority) comments.push_back("priority = " + join_doubles(*args.priority));

        bool ok = true;
        log << "rule            budget_residual      min_rho    max_rho\n";
        for (const auto& r : bundle.rules) {
            const double res = budget_residual(r.rule, data, args.varpi, kappa);
            const Vector vals = r.rule.eval_all(data.V);
            char line[160];
            std::snprintf(line, sizeof line, "%-14s %16.3e %12.6f %10.6f\n", r.name.c_str(), res, vals.minCoeff(),
                          vals.maxCoeff());
            log << line;
            if (!(std::abs(res) <= 1e-8)) ok = false;
        }
        for (const auto& w : bundle.models->basis().constant_column) {
            if (w) log << "warning: a first-phase column is constant on the pilot; it enters the basis as 0.5\n";
        }
        if (bundle.constrained) {
            log << "copt weights:";
            for (Eigen::Index j = 0; j < bundle.constrained->w.size(); ++j) log << ' ' << fixed(bundle.constrained->w(j));
            log << "  min improvement " << fixed(bundle.constrained->objective) << '\n';
        }
        if (bundle.global) {
            log << "gopt weights:";
            for (Eigen::Index j = 0; j < bundle.global->w.size(); ++j) log << ' ' << fixed(bundle.global->w(j));
            log << "  min improvement " << fixed(bundle.global->objective) << '\n';
        }

        RuleFile file{problem.name(), args.varpi, kappa, bundle.models, bundle.rules};
        save_rules(args.out, file, comments);
        log << "wrote rules to " << args.out << '\n';

        if (!args.probs_out.empty()) {
            CsvTable probs;
            probs.header = {"row", "R1"};
            for (const auto& r : bundle.rules) probs.header.push_back(r.name);
            std::vector<Vector> vals;
            for (const auto& r : bundle.rules) vals.push_back(r.rule.eval_all(data.V));
            for (Eigen::Index i = 0; i < data.size(); ++i) {
                std::vector<double> row{static_cast<double>(i + 1), static_cast<double>(data.R1[static_cast<std::size_t>(i)])};
                for (const auto& v : vals) row.push_back(v(i));
                probs.rows.push_back(std::move(row));
            }
            write_csv(args.probs_out, probs, comments);
            log << "wrote inclusion probabilities to " << args.probs_out << '\n';
        }

        if (!args.draw_out.empty()) {
            Rng rng(args.seed);
            draw_second_phase(data, bundle.rule(args.draw_rule), rng);
            CsvTable drawn = table;
            const std::string r2 = schema.r2_column.empty() ? "R2" : schema.r2_column;
            int r2col = -1;
            for (std::size_t k = 0; k < drawn.header.size(); ++k) {
                if (drawn.header[k] == r2) r2col = static_cast<int>(k);
            }
            if (r2col < 0) {
                drawn.header.push_back(r2);
                for (auto& row : drawn.rows) row.push_back(0.0);
                r2col = static_cast<int>(drawn.header.size()) - 1;
            }
            std::vector<int> ucols;
            for (const auto& u : schema.u_columns) ucols.push_back(drawn.column(u));
            for (Eigen::Index i = 0; i < data.size(); ++i) {
                auto& row = drawn.rows[static_cast<std::size_t>(i)];
                row[static_cast<std::size_t>(r2col)] = data.R2[static_cast<std::size_t>(i)];
                if (!data.observed(i)) {
                    for (int k : ucols) row[static_cast<std::size_t>(k)] = std::nan("");
                }
            }
            auto draw_comments = comments;
            draw_comments.push_back("draw_rule = " + args.draw_rule);
            draw_comments.push_back("sampled_fraction = " + format_double(data.sampled_fraction()));
            write_csv(args.draw_out, drawn, draw_comments);
            log << "drew second phase with " << args.draw_rule << ": sampled fraction " << fixed(data.sampled_fraction())
                << ", wrote " << args.draw_out << '\n';
        }
        if (!ok) {
            log << "error: budget residual exceeds 1e-8\n";
            return kExitCheckFailed;
        }
        return kExitOk;
    });
}

int cmd_estimate(const EstimateArgs& args, std::ostream& log)
{
    return guarded(log, [&] {
        require(!args.out.empty(), "estimate: --out is required");
        const DatasetSchema schema = DatasetSchema::load(args.schema);
        require(!schema.r1_column.empty() && !schema.r2_column.empty(),
                "estimate: the schema must name both r1_column and r2_column");
        TwoPhaseDataset data = dataset_from_csv(read_csv(args.data), schema);
        const EstimationProblem problem = schema.make_problem();
        const RuleFile file = load_rules(args.rules);
        require(file.problem == problem.name(),
                "estimate: rule file is for problem '" + file.problem + "', schema declares '" + problem.name() + "'");
        require(file.models->size() == problem.param_dim(), "estimate: rule file models do not match the parameter");
        require(file.models->basis().input_dim() == problem.v_dim(), "estimate: rule file basis does not match V");
        require(data.pilot_count() > 0, "estimate: no pilot rows");
        require(data.observed_count() > 0, "estimate: no observed units");

        std::vector<EstimatorKind> kinds;
        for (const auto& e : args.estimators) kinds.push_back(parse_estimator(e));

        data.kappa = file.kappa;
        set_inclusion(data, file.rule(args.rule));
        const RowMatrix Vp = data.rows_V(data.R1);
        const RowMatrix Up = data.rows_U(data.R1);
        const NuisanceParams eta = problem.fit_nuisance(Vp, Up);
        const Vector theta_pilot = problem.solve_theta_pilot(Vp, Up, eta);
        const auto reports = run_estimators(problem, data, eta, *file.models, theta_pilot, kinds, args.rule);

        CsvTable out;
        out.header = {"component", "estimator", "rule", "estimate", "se", "ci_lo", "ci_hi", "sampled_fraction"};
        std::ofstream f(args.out);
        if (!f) throw InvalidInput("cannot write " + args.out);
        f << "# two-phase estimates\n";
        f << "# data = " << args.data << "\n# schema = " << args.schema << "\n# rules = " << args.rules << '\n';
        f << "# rule = " << args.rule << "\n# estimators = " << join_list(args.estimators) << '\n';
        f << "# varpi = " << format_double(file.varpi) << "\n# kappa = " << format_double(file.kappa) << '\n';
        f << "component,estimator,rule,estimate,se,ci_lo,ci_hi,sampled_fraction\n";
        for (const auto& r : reports) {
            for (Eigen::Index j = 0; j < r.theta.size(); ++j) {
                f << j + 1 << ',' << to_string(r.kind) << ',' << r.rule_used << ',' << format_double(r.theta(j)) << ','
                  << format_double(r.se(j)) << ',' << format_double(r.ci_lo(j)) << ',' << format_double(r.ci_hi(j))
                  << ',' << format_double(r.sampled_fraction) << '\n';
                log << to_string(r.kind) << " component " << j + 1 << ": " << fixed(r.theta(j)) << " (se "
                    << fixed(r.se(j)) << ")\n";
            }
        }
        if (!f) throw InvalidInput("write failed for " + args.out);
        log << "sampled fraction " << fixed(data.sampled_fraction()) << "; wrote " << args.out << '\n';
        return kExitOk;
    });
}

int cmd_demo_classification(double varpi, std::ostream& out)
{
    constexpr double kDominanceTol = 1e-8;
    return guarded(out, [&] {
        const Vector theta = (Vector(3) << 0.2, 0.8, 0.6).finished();
        const ClassificationDemo demo = classification_demo(varpi, theta);
        out << "prevalence 0.2, sensitivity 0.8, specificity 0.6; test result observed for all, disease status sampled\n";
        out << "budget varpi = " << fixed(varpi, 4) << '\n';
        out << "full-data bounds:  " << fixed(demo.full_data_bound(0), 4) << "  " << fixed(demo.full_data_bound(1), 4)
            << "  " << fixed(demo.full_data_bound(2), 4) << "\n\n";
        out << "rule       rho(X=0) rho(X=1)   bound_prev bound_sens bound_spec   impr_prev impr_sens impr_spec\n";
        for (const auto& r : demo.rows) {
            char line[200];
            std::snprintf(line, sizeof line, "%-9s %9.4f %8.4f   %10.4f %10.4f %10.4f   %9.4f %9.4f %9.4f\n",
                          r.rule.c_str(), r.rho(0), r.rho(1), r.bound(0), r.bound(1), r.bound(2), r.improvement(0),
                          r.improvement(1), r.improvement(2));
            out << line;
        }
        bool dominates = true;
        for (const char* name : {"copt", "gopt"}) {
            if (demo.row(name).improvement.minCoeff() < -kDominanceTol) dominates = false;
        }
        out << "\nmaximin rules dominate uniform in every component: " << (dominates ? "yes" : "NO") << '\n';
        return dominates ? kExitOk : kExitCheckFailed;
    });
}

} // namespace twophase
