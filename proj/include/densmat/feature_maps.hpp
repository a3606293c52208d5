#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <numbers>

#include "densmat/random.hpp"
#include "densmat/types.hpp"

namespace densmat {

/// Frozen random Fourier feature map for the Gaussian kernel
/// k(x, y) = exp(-gamma * ||x - y||^2):
///
///   phi(x) = sqrt(2/D) * cos(W x + b),  w_j ~ N(0, 2*gamma*I),  b_j ~ U[0, 2pi)
///
/// so that phi(x)^T phi(y) ~ k(x, y). The gamma stored here is the spread of
/// the kernel this map approximates (callers that need the squared-kernel
/// construction pass gamma/2 themselves).
struct RffMap {
  Matrix weights;  // D x d
  Vector biases;   // D, in [0, 2pi)
  double gamma = 0.0;
  std::uint64_t seed = 0;

  Index dim_in() const { return weights.cols(); }
  Index dim_out() const { return weights.rows(); }
};

inline RffMap build_rff(Index d, Index D, double gamma_kernel, std::uint64_t seed) {
  require(d >= 1, "build_rff: input dimension must be >= 1");
  require(D >= 1, "build_rff: feature dimension must be >= 1");
  require(gamma_kernel > 0.0, "build_rff: gamma must be positive");

  RffMap map;
  map.gamma = gamma_kernel;
  map.seed = seed;
  map.weights.resize(D, d);
  map.biases.resize(D);

  Rng rng(seed);
  const double stddev = std::sqrt(2.0 * gamma_kernel);
  for (Index j = 0; j < D; ++j) {
    for (Index k = 0; k < d; ++k) {
      map.weights(j, k) = rng.normal(0.0, stddev);
    }
  }
  for (Index j = 0; j < D; ++j) {
    map.biases[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return map;
}

template <class Derived>
Vector apply_rff(const RffMap& map, const Eigen::MatrixBase<Derived>& x) {
  require(x.size() == map.dim_in(), "apply_rff: input has wrong dimension");
  const double scale = std::sqrt(2.0 / static_cast<double>(map.dim_out()));
  return scale * ((map.weights * x.derived().template cast<double>()).array() +
                  map.biases.array())
                     .cos()
                     .matrix();
}

/// Batch variant: one sample per row, N x d -> N x D.
inline Matrix apply_rff_rows(const RffMap& map, const Matrix& rows) {
  require(rows.cols() == map.dim_in(), "apply_rff: input has wrong dimension");
  const double scale = std::sqrt(2.0 / static_cast<double>(map.dim_out()));
  Matrix pre = rows * map.weights.transpose();
  pre.rowwise() += map.biases.transpose();
  return scale * pre.array().cos().matrix();
}

namespace detail {
// Raw embedding norms concentrate near 1; anything this small is a
// pathological draw, not a usable state.
constexpr double kMinEmbeddingNorm = 1e-12;
}

template <class Derived>
Vector apply_rff_normalized(const RffMap& map, const Eigen::MatrixBase<Derived>& x) {
  Vector raw = apply_rff(map, x);
  const double norm = raw.norm();
  if (!(norm > detail::kMinEmbeddingNorm)) {
    throw DegenerateEmbedding("apply_rff_normalized: raw embedding has zero norm");
  }
  return raw / norm;
}

inline Matrix apply_rff_normalized_rows(const RffMap& map, const Matrix& rows) {
  Matrix raw = apply_rff_rows(map, rows);
  for (Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw.row(i).norm();
    if (!(norm > detail::kMinEmbeddingNorm)) {
      throw DegenerateEmbedding("apply_rff_normalized: raw embedding has zero norm (row " +
                                std::to_string(i) + ")");
    }
    raw.row(i) /= norm;
  }
  return raw;
}

/// One-hot map for categories 1..K (Eq. of the categorical reduction).
inline Vector one_hot(Index category, Index num_categories) {
  require(num_categories >= 1, "one_hot: cardinality must be >= 1");
  require(category >= 1 && category <= num_categories,
          "one_hot: category out of range 1..K");
  Vector e = Vector::Zero(num_categories);
  e[category - 1] = 1.0;
  return e;
}

/// Encodes a real value in [0, 1] as the square roots of softmax weights over
/// equally spaced landmarks, yielding a unit-norm vector. beta controls how
/// sharply the weight concentrates on the nearest landmark.
class SoftmaxMap {
 public:
  SoftmaxMap(Index dim, double beta)
      : landmarks_(dim),
        beta_(beta),
        clamp_events_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    require(dim >= 2, "SoftmaxMap: need at least two landmarks");
    require(beta > 0.0, "SoftmaxMap: beta must be positive");
    for (Index i = 0; i < dim; ++i) {
      landmarks_[i] = static_cast<double>(i) / static_cast<double>(dim - 1);
    }
  }

  const Vector& landmarks() const { return landmarks_; }
  double beta() const { return beta_; }
  Index dim() const { return landmarks_.size(); }

  void set_beta(double beta) {
    require(beta > 0.0, "SoftmaxMap: beta must be positive");
    beta_ = beta;
  }

  /// Number of out-of-range inputs that were clamped to [0, 1] so far.
  std::uint64_t clamp_count() const { return clamp_events_->load(); }
  void note_clamp() const { ++(*clamp_events_); }

 private:
  Vector landmarks_;
  double beta_;
  std::shared_ptr<std::atomic<std::uint64_t>> clamp_events_;
};

/// Softmax weights p_i(y); max-shifted so large beta stays finite.
inline Vector softmax_probs(const SoftmaxMap& map, double y) {
  if (y < 0.0 || y > 1.0) {
    map.note_clamp();
    y = std::min(1.0, std::max(0.0, y));
  }
  Vector logits = -map.beta() * (map.landmarks().array() - y).square().matrix();
  const double shift = logits.maxCoeff();
  Vector p = (logits.array() - shift).exp();
  return p / p.sum();
}

inline Vector apply_softmax_map(const SoftmaxMap& map, double y) {
  return softmax_probs(map, y).cwiseSqrt();
}

}  // namespace densmat
