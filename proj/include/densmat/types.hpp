#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace densmat {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

/// Numeric breakdown inside an algorithm (solver non-convergence, NaN loss).
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raw feature embedding with (near-)zero norm that cannot be normalized.
struct DegenerateEmbedding : NumericFailure {
  using NumericFailure::NumericFailure;
};

/// A collapse query with no support under the model.
struct ZeroEvidence : NumericFailure {
  using NumericFailure::NumericFailure;
};

/// Dataset ingestion and file-format problems.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace densmat
