#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace twophase {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Data tables are row-major so that a unit's record is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Row = std::span<const double>;
using Indicator = std::vector<std::uint8_t>;

inline Row row_of(const RowMatrix& m, Eigen::Index i)
{
    return Row(m.data() + i * m.cols(), static_cast<std::size_t>(m.cols()));
}

/// Raised when inputs violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a valid answer
/// (singular systems, degenerate thresholds, non-finite losses).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw InvalidInput(msg);
}

} // namespace twophase
