#pragma once

#include "twophase/eif.hpp"
#include "twophase/kv_config.hpp"
#include "twophase/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace twophase {

/// First-phase table V for every unit, second-phase table U observed where
/// R1 + R2 = 1 (NaN elsewhere), and the sampling record.
struct TwoPhaseDataset {
    RowMatrix V;
    RowMatrix U;
    Indicator R1;
    Indicator R2;
    Vector rule_values;  // second-phase rule at each unit (empty before the draw)
    Vector rho_n;        // kappa + (1 - kappa) * rule value
    double kappa = 0.0;

    Eigen::Index size() const { return V.rows(); }
    bool observed(Eigen::Index i) const { return R1[static_cast<std::size_t>(i)] || R2[static_cast<std::size_t>(i)]; }
    Eigen::Index pilot_count() const;
    Eigen::Index observed_count() const;
    double sampled_fraction() const;

    RowMatrix rows_V(const Indicator& mask) const;
    RowMatrix rows_U(const Indicator& mask) const;

    /// Checks shapes, disjointness of R1 and R2, and that U is observed where
    /// a unit was sampled.
    void validate() const;
};

/// Header row plus numeric cells; empty cells read as NaN.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin = "csv");
/// NaN cells are written as empty fields.
void write_csv(const std::string& path, const CsvTable& table, const std::vector<std::string>& comments = {});

/// Column roles for a CSV dataset.
struct DatasetSchema {
    std::string problem;  // mean | linear | ate | ate_multi | classification
    std::vector<std::string> v_columns;
    std::vector<std::string> u_columns;
    std::string r1_column;
    std::string r2_column;
    int treatments = 1;  // ate_multi only
    std::optional<std::vector<double>> known_propensity;

    static DatasetSchema from_config(const KvConfig& cfg);
    static DatasetSchema load(const std::string& path);
    EstimationProblem make_problem() const;
};

/// Builds a dataset from a CSV table. R1/R2 default to zero when their
/// columns are absent from the schema.
TwoPhaseDataset dataset_from_csv(const CsvTable& table, const DatasetSchema& schema);

} // namespace twophase
