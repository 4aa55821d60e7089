#include "twophase/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace twophase {

Eigen::Index TwoPhaseDataset::pilot_count() const
{
    Eigen::Index c = 0;
    for (auto r : R1) c += r;
    return c;
}

Eigen::Index TwoPhaseDataset::observed_count() const
{
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < size(); ++i) c += observed(i) ? 1 : 0;
    return c;
}

double TwoPhaseDataset::sampled_fraction() const
{
    return size() == 0 ? 0.0 : static_cast<double>(observed_count()) / static_cast<double>(size());
}

namespace {

RowMatrix select_rows(const RowMatrix& M, const Indicator& mask)
{
    Eigen::Index count = 0;
    for (auto m : mask) count += m;
    RowMatrix out(count, M.cols());
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) out.row(at++) = M.row(i);
    }
    return out;
}

} // namespace

RowMatrix TwoPhaseDataset::rows_V(const Indicator& mask) const
{
    require(static_cast<Eigen::Index>(mask.size()) == size(), "dataset: mask has wrong length");
    return select_rows(V, mask);
}

RowMatrix TwoPhaseDataset::rows_U(const Indicator& mask) const
{
    require(static_cast<Eigen::Index>(mask.size()) == size(), "dataset: mask has wrong length");
    return select_rows(U, mask);
}

void TwoPhaseDataset::validate() const
{
    const auto n = static_cast<std::size_t>(size());
    require(U.rows() == V.rows(), "dataset: V and U differ in row count");
    require(R1.size() == n && R2.size() == n, "dataset: indicator length differs from row count");
    require(rho_n.size() == 0 || rho_n.size() == V.rows(), "dataset: inclusion probabilities have wrong length");
    for (std::size_t i = 0; i < n; ++i) {
        require(R1[i] <= 1 && R2[i] <= 1, "dataset: indicators must be 0 or 1");
        require(!(R1[i] && R2[i]), "dataset: unit " + std::to_string(i) + " is in both the pilot and the second phase");
        if (R1[i] || R2[i]) {
            for (Eigen::Index k = 0; k < U.cols(); ++k) {
                require(std::isfinite(U(static_cast<Eigen::Index>(i), k)),
                        "dataset: second-phase value missing for sampled unit " + std::to_string(i));
            }
        }
        for (Eigen::Index k = 0; k < V.cols(); ++k) {
            require(std::isfinite(V(static_cast<Eigen::Index>(i), k)),
                    "dataset: first-phase value missing for unit " + std::to_string(i));
        }
    }
}

// ---------------------------------------------------------------------------

int CsvTable::column(const std::string& name) const
{
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) return static_cast<int>(k);
    }
    throw InvalidInput("csv: no column named '" + name + "'");
}

CsvTable parse_csv(const std::string& text, const std::string& origin)
{
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line[0] == '#') continue;
        const auto cells = split(line, ',');
        if (!have_header) {
            t.header = cells;
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw InvalidInput(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                               " fields, found " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            row.push_back(c.empty() ? std::nan("") : parse_double(c, origin + ":" + std::to_string(lineno)));
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw InvalidInput(origin + ": missing header row");
    return t;
}

CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path);
}

void write_csv(const std::string& path, const CsvTable& table, const std::vector<std::string>& comments)
{
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << '\n';
    for (std::size_t k = 0; k < table.header.size(); ++k) out << (k ? "," : "") << table.header[k];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out << ',';
            if (!std::isnan(row[k])) out << format_double(row[k]);
        }
        out << '\n';
    }
    if (!out) throw InvalidInput("write failed for " + path);
}

// ---------------------------------------------------------------------------

DatasetSchema DatasetSchema::from_config(const KvConfig& cfg)
{
    cfg.reject_unknown({"problem", "v_columns", "u_columns", "r1_column", "r2_column", "treatments", "known_propensity"});
    DatasetSchema s;
    s.problem = cfg.get("problem");
    s.v_columns = cfg.get_list("v_columns");
    s.u_columns = cfg.get_list("u_columns");
    s.r1_column = cfg.get_or("r1_column", "");
    s.r2_column = cfg.get_or("r2_column", "");
    s.treatments = static_cast<int>(cfg.get_int_or("treatments", 1));
    if (cfg.has("known_propensity")) s.known_propensity = cfg.get_doubles("known_propensity");
    require(!s.v_columns.empty(), "schema: v_columns is empty");
    require(!s.u_columns.empty(), "schema: u_columns is empty");
    return s;
}

DatasetSchema DatasetSchema::load(const std::string& path)
{
    return from_config(KvConfig::load(path));
}

EstimationProblem DatasetSchema::make_problem() const
{
    const int dv = static_cast<int>(v_columns.size());
    const int du = static_cast<int>(u_columns.size());
    if (problem == "mean" || problem == "multi_mean") return EstimationProblem::mean(du, dv);
    if (problem == "linear") return EstimationProblem::linear_coef(du, dv - 1);
    if (problem == "ate") {
        require(dv >= 2, "schema: ate needs v_columns = outcome, treatment, ...");
        std::optional<double> pi;
        if (known_propensity) {
            require(known_propensity->size() == 1, "schema: ate takes one known propensity");
            pi = known_propensity->front();
        }
        return EstimationProblem::ate_binary(du, dv - 2, pi);
    }
    if (problem == "ate_multi") {
        require(dv >= 2, "schema: ate_multi needs v_columns = outcome, treatment, ...");
        std::optional<Vector> probs;
        if (known_propensity) probs = Eigen::Map<const Vector>(known_propensity->data(), static_cast<Eigen::Index>(known_propensity->size()));
        return EstimationProblem::ate_multi(treatments, du, dv - 2, probs);
    }
    if (problem == "classification") {
        require(dv == 1 && du == 1, "schema: classification needs one test column and one disease column");
        return EstimationProblem::classification();
    }
    throw InvalidInput("schema: unknown problem '" + problem + "'");
}

TwoPhaseDataset dataset_from_csv(const CsvTable& table, const DatasetSchema& schema)
{
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    require(n > 0, "dataset: no data rows");
    TwoPhaseDataset d;
    d.V.resize(n, static_cast<Eigen::Index>(schema.v_columns.size()));
    d.U.resize(n, static_cast<Eigen::Index>(schema.u_columns.size()));
    std::vector<int> vcol;
    std::vector<int> ucol;
    for (const auto& c : schema.v_columns) vcol.push_back(table.column(c));
    for (const auto& c : schema.u_columns) ucol.push_back(table.column(c));
    const int r1 = schema.r1_column.empty() ? -1 : table.column(schema.r1_column);
    const int r2 = schema.r2_column.empty() ? -1 : table.column(schema.r2_column);
    d.R1.assign(static_cast<std::size_t>(n), 0);
    d.R2.assign(static_cast<std::size_t>(n), 0);
    auto flag = [&](double x, Eigen::Index i, const std::string& col) -> std::uint8_t {
        if (std::isnan(x)) return 0;
        require(x == 0.0 || x == 1.0, "dataset: column " + col + " must be 0/1 (row " + std::to_string(i + 1) + ")");
        return x == 1.0 ? 1 : 0;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < vcol.size(); ++k) d.V(i, static_cast<Eigen::Index>(k)) = row[static_cast<std::size_t>(vcol[k])];
        for (std::size_t k = 0; k < ucol.size(); ++k) d.U(i, static_cast<Eigen::Index>(k)) = row[static_cast<std::size_t>(ucol[k])];
        if (r1 >= 0) d.R1[static_cast<std::size_t>(i)] = flag(row[static_cast<std::size_t>(r1)], i, schema.r1_column);
        if (r2 >= 0) d.R2[static_cast<std::size_t>(i)] = flag(row[static_cast<std::size_t>(r2)], i, schema.r2_column);
    }
    d.validate();
    return d;
}

} // namespace twophase
