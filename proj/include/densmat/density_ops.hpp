#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "densmat/types.hpp"

namespace densmat {

/// Low-rank factorization rho = V^T Lambda V of a density matrix. Rows of v
/// are the component vectors; lambda holds the nonnegative mixture weights.
/// When produced by eigendecomposition the rows are orthonormal and lambda
/// sums to at most one (strictly less after rank truncation).
struct FactorizedDensityMatrix {
  Matrix v;       // r x D
  Vector lambda;  // r

  Index rank() const { return v.rows(); }
  Index dim() const { return v.cols(); }

  /// Dense reconstruction V^T Lambda V. Test and small-scale use only.
  Matrix reconstruct() const { return v.transpose() * lambda.asDiagonal() * v; }
};

/// Dense symmetric density matrix. Kept as the oracle representation and for
/// the small output-side matrices produced by collapse.
struct DenseDensityMatrix {
  Matrix entries;

  Index dim() const { return entries.rows(); }
  double trace() const { return entries.trace(); }
};

namespace detail {

inline void check_unit_norm(double squared_norm, double tol, const char* who) {
  require(std::abs(std::sqrt(squared_norm) - 1.0) <= tol,
          std::string(who) + ": vector is not unit norm");
}

}  // namespace detail

/// Symmetric eigendecomposition with eigenvalues sorted descending.
/// Shared by density-matrix factorization and PCA.
struct SymmetricEig {
  Vector values;   // descending
  Matrix vectors;  // columns match values
};

inline SymmetricEig spectral_decompose(const Matrix& sym) {
  require(sym.rows() == sym.cols(), "spectral_decompose: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericFailure(
        "spectral_decompose: eigensolver did not converge within its iteration "
        "budget (dim=" +
        std::to_string(sym.rows()) + ", status=" +
        std::to_string(static_cast<int>(solver.info())) + ")");
  }
  SymmetricEig out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Streaming accumulator for rho = (1/N) sum z_i z_i^T. Adds are buffered and
/// folded in with rank updates; a two-level partial sum keeps rounding drift
/// bounded for very long streams. Shards accumulate independently and merge.
class DensityAccumulator {
 public:
  explicit DensityAccumulator(Index dim)
      : dim_(dim),
        major_(Matrix::Zero(dim, dim)),
        minor_(Matrix::Zero(dim, dim)),
        pending_(kBlockRows, dim) {
    require(dim >= 1, "DensityAccumulator: dimension must be >= 1");
  }

  Index dim() const { return dim_; }
  Index count() const { return count_; }

  void add(const Eigen::Ref<const Vector>& z, bool validate_unit_norm = true) {
    require(z.size() == dim_, "DensityAccumulator: embedding has wrong dimension");
    if (validate_unit_norm) {
      detail::check_unit_norm(z.squaredNorm(), 1e-6, "DensityAccumulator");
    }
    pending_.row(pending_rows_++) = z.transpose();
    ++count_;
    if (pending_rows_ == kBlockRows) flush();
  }

  void add_rows(const Eigen::Ref<const Matrix>& rows, bool validate_unit_norm = true) {
    for (Index i = 0; i < rows.rows(); ++i) add(rows.row(i).transpose(), validate_unit_norm);
  }

  void merge(const DensityAccumulator& other) {
    require(other.dim_ == dim_, "DensityAccumulator: merging mismatched dimensions");
    Matrix theirs = other.unnormalized_sum();
    major_ += theirs;
    count_ += other.count_;
  }

  /// rho = sum / count; trace is one up to rounding for unit-norm inputs.
  DenseDensityMatrix finalize() const {
    require(count_ >= 1, "DensityAccumulator: no embeddings were accumulated");
    Matrix sum = unnormalized_sum();
    sum /= static_cast<double>(count_);
    return DenseDensityMatrix{0.5 * (sum + sum.transpose())};
  }

 private:
  static constexpr Index kBlockRows = 256;
  static constexpr Index kMinorFolds = 64;

  void flush() {
    if (pending_rows_ == 0) return;
    minor_.selfadjointView<Eigen::Lower>().rankUpdate(
        pending_.topRows(pending_rows_).transpose(), 1.0);
    pending_rows_ = 0;
    if (++minor_folds_ == kMinorFolds) {
      major_ += minor_;
      minor_.setZero();
      minor_folds_ = 0;
    }
  }

  Matrix unnormalized_sum() const {
    Matrix lower = minor_;
    if (pending_rows_ > 0) {
      lower.selfadjointView<Eigen::Lower>().rankUpdate(
          pending_.topRows(pending_rows_).transpose(), 1.0);
    }
    Matrix sum = lower.selfadjointView<Eigen::Lower>();
    sum += major_;
    return sum;
  }

  Index dim_;
  Index count_ = 0;
  Matrix major_;  // symmetric, fully folded
  Matrix minor_;  // lower triangle holds recent rank updates
  Matrix pending_;
  Index pending_rows_ = 0;
  Index minor_folds_ = 0;
};

/// rho = (1/N) sum z_i z_i^T over unit-norm embedding rows.
inline DenseDensityMatrix estimate_density_matrix(const Matrix& embedding_rows) {
  require(embedding_rows.rows() >= 1, "estimate_density_matrix: empty embedding stream");
  DensityAccumulator acc(embedding_rows.cols());
  acc.add_rows(embedding_rows);
  return acc.finalize();
}

/// Top-r spectral factorization of a symmetric PSD matrix. Eigenvalues that
/// are negative from rounding are clamped to zero. lambda is not renormalized
/// after truncation unless asked, so a truncated estimate stays an
/// underestimate of the full one.
inline FactorizedDensityMatrix factorize(const DenseDensityMatrix& rho, Index r,
                                         bool renormalize = false) {
  const Index dim = rho.dim();
  require(r >= 1, "factorize: rank must be >= 1");
  require(r <= dim, "factorize: rank exceeds matrix dimension");
  SymmetricEig eig = spectral_decompose(rho.entries);

  FactorizedDensityMatrix out;
  out.lambda = eig.values.head(r).cwiseMax(0.0);
  out.v = eig.vectors.leftCols(r).transpose();
  if (renormalize) {
    const double total = out.lambda.sum();
    if (total > 0.0) out.lambda /= total;
  }
  return out;
}

/// Dual-route factorization of rho = sum_i w_i z_i z_i^T via the Gram matrix
/// of the (weighted) rows: same nonzero spectrum, never materializes the
/// D x D matrix. Components below 1e-14 of the leading eigenvalue carry no
/// reconstructable mass and are dropped, so the returned rank can be lower
/// than requested.
inline FactorizedDensityMatrix factorize_gram(const Matrix& rows, const Vector& weights,
                                              Index r, bool renormalize = false) {
  const Index n = rows.rows();
  const Index dim = rows.cols();
  require(n >= 1, "factorize_gram: empty row set");
  require(weights.size() == n, "factorize_gram: weight count mismatch");
  require(r >= 1, "factorize_gram: rank must be >= 1");
  require(r <= dim, "factorize_gram: rank exceeds matrix dimension");
  require(weights.minCoeff() >= 0.0, "factorize_gram: weights must be nonnegative");

  Matrix scaled = weights.cwiseSqrt().asDiagonal() * rows;  // n x D
  Matrix gram(n, n);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(scaled, 1.0);
  Matrix gram_full = gram.selfadjointView<Eigen::Lower>();
  SymmetricEig eig = spectral_decompose(gram_full);

  const double floor = std::max(0.0, eig.values[0]) * 1e-14;
  Index keep = 0;
  const Index cap = std::min(r, n);
  while (keep < cap && eig.values[keep] > floor) ++keep;
  if (keep == 0) keep = 1;  // a single (possibly tiny) component beats an empty one

  FactorizedDensityMatrix out;
  out.lambda = eig.values.head(keep).cwiseMax(0.0);
  out.v.resize(keep, dim);
  for (Index k = 0; k < keep; ++k) {
    Vector comp = scaled.transpose() * eig.vectors.col(k);
    const double norm = comp.norm();
    if (norm > 0.0) comp /= norm;
    out.v.row(k) = comp.transpose();
  }
  if (renormalize) {
    const double total = out.lambda.sum();
    if (total > 0.0) out.lambda /= total;
  }
  return out;
}

/// Unvalidated Born quadratic form <phi| rho |phi> = ||Lambda^{1/2} V phi||^2.
/// O(D r) per query.
inline double quadratic_form(const FactorizedDensityMatrix& rho,
                             const Eigen::Ref<const Vector>& phi) {
  require(phi.size() == rho.dim(), "born_probability: dimension mismatch");
  Vector coords = rho.v * phi;
  return rho.lambda.dot(coords.cwiseAbs2());
}

inline double quadratic_form(const DenseDensityMatrix& rho,
                             const Eigen::Ref<const Vector>& phi) {
  require(phi.size() == rho.dim(), "born_probability: dimension mismatch");
  return phi.dot(rho.entries * phi);
}

/// Born rule P(phi | rho) for a unit-norm state phi.
template <class Rho>
double born_probability(const Rho& rho, const Eigen::Ref<const Vector>& phi) {
  detail::check_unit_norm(phi.squaredNorm(), 1e-6, "born_probability");
  return quadratic_form(rho, phi);
}

/// Kronecker product of two unit vectors, laid out X-major: entry (a, b) of
/// the pair maps to index a * Dy + b. Every reshape in this library assumes
/// this layout.
inline Vector tensor_embed(const Eigen::Ref<const Vector>& zx,
                           const Eigen::Ref<const Vector>& zy) {
  const Index dx = zx.size();
  const Index dy = zy.size();
  Vector out(dx * dy);
  for (Index a = 0; a < dx; ++a) out.segment(a * dy, dy) = zx[a] * zy;
  return out;
}

/// Result of collapsing the input subsystem of a joint state onto a query
/// embedding: the output-side density matrix and the pre-normalization trace.
struct ConditionalState {
  DenseDensityMatrix rho_y;
  double evidence = 0.0;
};

/// Applies the measurement operator pi = zx zx^T (x) Id to a factorized joint
/// state and traces out the input subsystem:
///
///   rho_Y = Tr_X[ pi rho pi ] / Tr[ pi rho pi ].
///
/// Computed without materializing the Dx*Dy joint: each component row is
/// reshaped to Dx x Dy, contracted against zx, and the Dy x Dy outer products
/// are mixed by lambda.
inline ConditionalState measure_and_collapse(const FactorizedDensityMatrix& joint,
                                             Index dim_x, Index dim_y,
                                             const Eigen::Ref<const Vector>& zx) {
  require(dim_x >= 1 && dim_y >= 1, "measure_and_collapse: dimensions must be >= 1");
  require(joint.dim() == dim_x * dim_y,
          "measure_and_collapse: joint dimension is not dim_x * dim_y");
  require(zx.size() == dim_x, "measure_and_collapse: query has wrong dimension");
  detail::check_unit_norm(zx.squaredNorm(), 1e-6, "measure_and_collapse");

  Matrix rho_y = Matrix::Zero(dim_y, dim_y);
  double evidence = 0.0;
  Vector row(joint.dim());
  for (Index k = 0; k < joint.rank(); ++k) {
    row = joint.v.row(k);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        component(row.data(), dim_x, dim_y);
    Vector a = component.transpose() * zx;
    rho_y.selfadjointView<Eigen::Lower>().rankUpdate(a, joint.lambda[k]);
    evidence += joint.lambda[k] * a.squaredNorm();
  }
  if (!(evidence >= 1e-300)) {
    throw ZeroEvidence("measure_and_collapse: query has no support under the model");
  }
  Matrix full = rho_y.selfadjointView<Eigen::Lower>();
  full /= evidence;
  return ConditionalState{DenseDensityMatrix{0.5 * (full + full.transpose())}, evidence};
}

}  // namespace densmat
