#pragma once

#include <cmath>
#include <numbers>

#include "densmat/feature_maps.hpp"
#include "densmat/types.hpp"

namespace densmat {

/// Gaussian-kernel normalizing constant M_gamma = (pi / gamma)^(d/2).
inline double normalizing_constant(double gamma, Index d) {
  require(gamma > 0.0, "normalizing_constant: gamma must be positive");
  require(d >= 1, "normalizing_constant: dimension must be >= 1");
  return std::pow(std::numbers::pi / gamma, 0.5 * static_cast<double>(d));
}

/// Exact memory-based Parzen estimator
///   f(x) = (1 / (N M_gamma)) sum_i exp(-gamma ||x_i - x||^2).
/// The correctness oracle and timing baseline for the density-matrix models.
struct KdeModel {
  Matrix train_points;  // N x d
  double gamma = 0.0;
  double norm_const = 0.0;

  Index size() const { return train_points.rows(); }
  Index dim() const { return train_points.cols(); }
};

inline KdeModel fit_kde(const Matrix& train_points, double gamma) {
  require(train_points.rows() >= 1, "fit_kde: need at least one training point");
  require(gamma > 0.0, "fit_kde: gamma must be positive");
  return KdeModel{train_points, gamma, normalizing_constant(gamma, train_points.cols())};
}

/// Single-query evaluation with compensated (Kahan) summation. O(dN).
inline double kde_density(const KdeModel& model, const Eigen::Ref<const Vector>& x) {
  require(x.size() == model.dim(), "kde_density: query has wrong dimension");
  double sum = 0.0;
  double comp = 0.0;
  for (Index i = 0; i < model.size(); ++i) {
    const double sq = (model.train_points.row(i).transpose() - x).squaredNorm();
    const double term = std::exp(-model.gamma * sq);
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum / (static_cast<double>(model.size()) * model.norm_const);
}

/// Batched evaluation, blocked over training points so the distance matrix
/// never exceeds a fixed footprint. Block sums are compensated when folded.
inline Vector kde_density_rows(const KdeModel& model, const Matrix& queries) {
  require(queries.cols() == model.dim(), "kde_density: query has wrong dimension");
  const Index nq = queries.rows();
  const Index n = model.size();
  constexpr Index kBlock = 4096;

  Vector query_sq = queries.rowwise().squaredNorm();
  Vector sum = Vector::Zero(nq);
  Vector comp = Vector::Zero(nq);
  for (Index start = 0; start < n; start += kBlock) {
    const Index len = std::min(kBlock, n - start);
    const auto block = model.train_points.middleRows(start, len);
    Vector train_sq = block.rowwise().squaredNorm();
    Matrix cross = queries * block.transpose();  // nq x len
    Vector partial =
        ((((-2.0 * cross).colwise() + query_sq).rowwise() + train_sq.transpose()) *
         -model.gamma)
            .array()
            .exp()
            .matrix()
            .rowwise()
            .sum();
    Vector y = partial - comp;
    Vector t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum / (static_cast<double>(n) * model.norm_const);
}

/// Linear RFF estimator of Eq.-(4) form: the mean raw embedding dotted with
/// the query embedding, over M_gamma. Unlike the density-matrix construction
/// it can go negative; it is kept to demonstrate exactly that.
struct RffKdeModel {
  RffMap rff;            // built for the target gamma directly
  Vector phi_mean;       // mean raw RFF embedding of the training set
  double gamma = 0.0;
  double norm_const = 0.0;
};

inline RffKdeModel fit_rff_linear_kde(const Matrix& train_points, double gamma, Index D,
                                      std::uint64_t seed) {
  require(train_points.rows() >= 1, "fit_rff_linear_kde: empty training set");
  RffKdeModel model;
  model.rff = build_rff(train_points.cols(), D, gamma, seed);
  model.phi_mean = apply_rff_rows(model.rff, train_points).colwise().mean();
  model.gamma = gamma;
  model.norm_const = normalizing_constant(gamma, train_points.cols());
  return model;
}

inline double rff_linear_kde(const RffKdeModel& model, const Eigen::Ref<const Vector>& x) {
  return model.phi_mean.dot(apply_rff(model.rff, x)) / model.norm_const;
}

}  // namespace densmat
