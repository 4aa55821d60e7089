#include "twophase/rule_io.hpp"

#include <fstream>
#include <sstream>

namespace twophase {

const SamplingRule& RuleFile::rule(const std::string& name) const
{
    for (const auto& r : rules) {
        if (r.name == name) return r.rule;
    }
    throw InvalidInput("rule file: no rule named '" + name + "'");
}

namespace {

constexpr const char* kFormat = "twophase-rules-1";

std::string join(const Vector& v)
{
    std::string s;
    for (Eigen::Index j = 0; j < v.size(); ++j) s += (j ? ", " : "") + format_double(v(j));
    return s;
}

Vector to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_rule(std::ostringstream& out, const std::string& prefix, const SamplingRule& rule,
                const MomentModels* models)
{
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, UniformRule>) {
                out << prefix << ".kind = uniform\n";
                out << prefix << ".value = " << format_double(r.c) << '\n';
            } else if constexpr (std::is_same_v<T, TruncatedRule>) {
                const auto* ms = std::get_if<MomentScore>(&r.score);
                if (!ms) throw InvalidInput("rule file: tabulated scores cannot be serialized");
                if (ms->models.get() != models) throw InvalidInput("rule file: rule refers to different moment models");
                out << prefix << ".kind = truncated\n";
                out << prefix << ".coef = " << join(ms->coef) << '\n';
                out << prefix << ".tau = " << format_double(r.tau) << '\n';
            } else {
                out << prefix << ".kind = mixture\n";
                out << prefix << ".weights = " << join(r.weights) << '\n';
                write_rule(out, prefix + ".base", *r.base, models);
                for (std::size_t k = 0; k < r.components.size(); ++k) {
                    write_rule(out, prefix + ".component." + std::to_string(k + 1), r.components[k], models);
                }
            }
        },
        rule.variant());
}

SamplingRule read_rule(const KvConfig& cfg, const std::string& prefix, const std::shared_ptr<const MomentModels>& models)
{
    const std::string kind = cfg.get(prefix + ".kind");
    if (kind == "uniform") return SamplingRule::uniform(cfg.get_double(prefix + ".value"));
    if (kind == "truncated") {
        const Vector coef = to_vector(cfg.get_doubles(prefix + ".coef"));
        require(coef.size() == models->size(), "rule file: " + prefix + " has the wrong number of coefficients");
        return SamplingRule::truncated(MomentScore{models, coef}, cfg.get_double(prefix + ".tau"));
    }
    if (kind == "mixture") {
        const Vector w = to_vector(cfg.get_doubles(prefix + ".weights"));
        std::vector<SamplingRule> comps;
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            comps.push_back(read_rule(cfg, prefix + ".component." + std::to_string(k + 1), models));
        }
        return SamplingRule::mixture(read_rule(cfg, prefix + ".base", models), std::move(comps), w);
    }
    throw InvalidInput("rule file: unknown rule kind '" + kind + "' for " + prefix);
}

} // namespace

std::string serialize_rules(const RuleFile& file, const std::vector<std::string>& comments)
{
    require(file.models != nullptr, "rule file: missing moment models");
    std::ostringstream out;
    for (const auto& c : comments) out << "# " << c << '\n';
    const BasisSpec& basis = file.models->basis();
    out << "format = " << kFormat << '\n';
    out << "problem = " << file.problem << '\n';
    out << "varpi = " << format_double(file.varpi) << '\n';
    out << "kappa = " << format_double(file.kappa) << '\n';
    out << "basis.lo = " << join(basis.lo) << '\n';
    out << "basis.hi = " << join(basis.hi) << '\n';
    out << "models = " << file.models->size() << '\n';
    for (int j = 0; j < file.models->size(); ++j) {
        const auto& m = file.models->models()[static_cast<std::size_t>(j)];
        out << "model." << j + 1 << ".gamma1 = " << join(m.gamma1) << '\n';
        out << "model." << j + 1 << ".gamma2 = " << join(m.gamma2) << '\n';
    }
    std::string names;
    for (const auto& r : file.rules) names += (names.empty() ? "" : ", ") + r.name;
    out << "rules = " << names << '\n';
    for (const auto& r : file.rules) write_rule(out, "rule." + r.name, r.rule, file.models.get());
    return out.str();
}

RuleFile parse_rules(const KvConfig& cfg)
{
    require(cfg.get("format") == kFormat, "rule file: unsupported format '" + cfg.get("format") + "'");
    RuleFile f;
    f.problem = cfg.get("problem");
    f.varpi = cfg.get_double("varpi");
    f.kappa = cfg.get_double("kappa");
    BasisSpec basis;
    basis.lo = to_vector(cfg.get_doubles("basis.lo"));
    basis.hi = to_vector(cfg.get_doubles("basis.hi"));
    require(basis.lo.size() == basis.hi.size() && basis.lo.size() > 0, "rule file: basis ranges are malformed");
    for (Eigen::Index k = 0; k < basis.lo.size(); ++k) basis.constant_column.push_back(!(basis.hi(k) > basis.lo(k)));
    const long long count = cfg.get_int("models");
    require(count >= 1, "rule file: need at least one moment model");
    std::vector<MomentModel> models;
    for (long long j = 1; j <= count; ++j) {
        const std::string p = "model." + std::to_string(j);
        models.push_back(MomentModel{to_vector(cfg.get_doubles(p + ".gamma1")), to_vector(cfg.get_doubles(p + ".gamma2"))});
    }
    f.models = std::make_shared<const MomentModels>(std::move(basis), std::move(models));
    for (const auto& name : cfg.get_list("rules")) f.rules.push_back({name, read_rule(cfg, "rule." + name, f.models)});
    return f;
}

void save_rules(const std::string& path, const RuleFile& file, const std::vector<std::string>& comments)
{
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    out << serialize_rules(file, comments);
    if (!out) throw InvalidInput("write failed for " + path);
}

RuleFile load_rules(const std::string& path)
{
    return parse_rules(KvConfig::load(path));
}

} // namespace twophase
