#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "densmat/baseline_kde.hpp"
#include "densmat/density_ops.hpp"
#include "densmat/feature_maps.hpp"
#include "densmat/training.hpp"

namespace densmat {

enum class TrainedBy { estimation, sgd };

/// Which embedding feeds the Born form: the shipped estimator normalizes the
/// RFF embedding; the raw variant matches the plain squared-kernel expansion
/// and exists for oracle comparisons and the convergence study.
enum class EmbeddingMode { normalized, raw };

/// Density estimator combining a frozen RFF map (sampled for gamma/2 so the
/// squared inner products approximate the gamma kernel) with a factorized
/// density matrix. Densities are Born values over M_gamma.
struct DmkdeModel {
  RffMap rff;  // built for gamma/2
  FactorizedDensityMatrix rho;
  double gamma = 0.0;  // target kernel spread
  Index dim_in = 0;
  double norm_const = 0.0;  // (pi/gamma)^(d/2)
  TrainedBy trained_by = TrainedBy::estimation;
  EmbeddingMode embedding = EmbeddingMode::normalized;
  Index requested_rank = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline Matrix dmkde_embed_rows(const DmkdeModel& model, const Matrix& rows) {
  return model.embedding == EmbeddingMode::normalized
             ? apply_rff_normalized_rows(model.rff, rows)
             : apply_rff_rows(model.rff, rows);
}

inline Vector dmkde_embed(const DmkdeModel& model, const Eigen::Ref<const Vector>& x) {
  return model.embedding == EmbeddingMode::normalized ? apply_rff_normalized(model.rff, x)
                                                      : apply_rff(model.rff, x);
}

/// Gram route for tall-thin data (N < D), dense covariance route otherwise.
inline FactorizedDensityMatrix factorize_embeddings(const Matrix& embeddings, Index r,
                                                    bool validate_unit_norm) {
  const Index n = embeddings.rows();
  const Index dim = embeddings.cols();
  if (n < dim) {
    Vector weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
    return factorize_gram(embeddings, weights, r);
  }
  DensityAccumulator acc(dim);
  acc.add_rows(embeddings, validate_unit_norm);
  return factorize(acc.finalize(), r);
}

}  // namespace detail

/// Optimization-free training: embed, average outer products, factorize to
/// rank r. Single pass over the data.
inline DmkdeModel fit_estimation(const Matrix& train, double gamma, Index D, Index r,
                                 std::uint64_t seed,
                                 EmbeddingMode embedding = EmbeddingMode::normalized) {
  require(train.rows() >= 1, "dmkde fit: need at least one sample");
  require(gamma > 0.0, "dmkde fit: gamma must be positive");
  require(r >= 1 && r <= D, "dmkde fit: rank must be in 1..D");

  DmkdeModel model;
  model.rff = build_rff(train.cols(), D, gamma / 2.0, seed);
  model.gamma = gamma;
  model.dim_in = train.cols();
  model.norm_const = normalizing_constant(gamma, train.cols());
  model.requested_rank = r;
  model.seed = seed;
  model.embedding = embedding;
  model.trained_by = TrainedBy::estimation;

  Matrix z = detail::dmkde_embed_rows(model, train);
  model.rho = detail::factorize_embeddings(z, r, embedding == EmbeddingMode::normalized);
  return model;
}

/// Born density (1/M_gamma) <z|rho|z>. O(D r), independent of N.
inline double density(const DmkdeModel& model, const Eigen::Ref<const Vector>& x) {
  return quadratic_form(model.rho, detail::dmkde_embed(model, x)) / model.norm_const;
}

inline Vector density_rows(const DmkdeModel& model, const Matrix& queries) {
  Matrix z = detail::dmkde_embed_rows(model, queries);
  Matrix coords = model.rho.v * z.transpose();  // r x nq
  return (coords.cwiseAbs2().transpose() * model.rho.lambda) / model.norm_const;
}

/// Mean log density with the documented 1e-30 floor.
inline double mean_log_density(const DmkdeModel& model, const Matrix& queries) {
  Vector dens = density_rows(model, queries);
  return dens.cwiseMax(1e-30).array().log().mean();
}

/// Negative log-likelihood objective over fixed (frozen-RFF) embeddings.
/// Parameters are [vec(V) | lambda-logits]; lambda = softmax(logits) keeps
/// the factorization a valid density matrix throughout training.
class DmkdeObjective {
 public:
  DmkdeObjective(Matrix embeddings, Index rank, double norm_const)
      : z_(std::move(embeddings)), r_(rank), d_(z_.cols()), m_gamma_(norm_const) {}

  Index param_count() const { return r_ * d_ + r_; }
  Index sample_count() const { return z_.rows(); }

  Vector pack(const Matrix& v, const Vector& logits) const {
    Vector params(param_count());
    params.head(r_ * d_) = Eigen::Map<const Vector>(v.data(), r_ * d_);
    params.tail(r_) = logits;
    return params;
  }

  Matrix unpack_v(const Vector& params) const {
    return Eigen::Map<const Matrix>(params.data(), r_, d_);
  }

  Vector unpack_lambda(const Vector& params) const {
    return softmax(params.tail(r_));
  }

  std::string param_name(Index i) const {
    if (i < r_ * d_) {
      return "V(" + std::to_string(i % r_) + "," + std::to_string(i / r_) + ")";
    }
    return "theta[" + std::to_string(i - r_ * d_) + "]";
  }

  /// Summed NLL over the batch; grad may be null for loss-only evaluation.
  double loss_and_grad(const Vector& params, const std::vector<Index>& batch,
                       Vector* grad) const {
    const Index b = static_cast<Index>(batch.size());
    Matrix zb(b, d_);
    for (Index i = 0; i < b; ++i) zb.row(i) = z_.row(batch[static_cast<std::size_t>(i)]);

    Eigen::Map<const Matrix> v(params.data(), r_, d_);
    const Vector logits = params.tail(r_);
    const Vector lambda = softmax(logits);

    Matrix u = v * zb.transpose();                      // r x b
    Matrix u2 = u.cwiseAbs2();
    Vector q = u2.transpose() * lambda;                 // b, Born values
    Vector density = q / m_gamma_;

    double loss = 0.0;
    Vector active = Vector::Zero(b);
    for (Index i = 0; i < b; ++i) {
      if (density[i] > 1e-30) {
        loss -= std::log(density[i]);
        active[i] = 1.0;
      } else {
        loss -= std::log(1e-30);  // clamped sample; no gradient
      }
    }
    if (grad) {
      Vector inv_q = (active.array() / q.array().max(1e-300)).matrix();
      // dL/dU_kb = -2 * lambda_k * U_kb / q_b
      Matrix gu = -2.0 * (lambda.asDiagonal() * u * inv_q.asDiagonal());
      Eigen::Map<Matrix>(grad->data(), r_, d_) = gu * zb;
      Vector glambda = -(u2 * inv_q);
      grad->tail(r_) = softmax_backward(lambda, glambda);
    }
    return loss;
  }

  static Vector softmax(const Vector& logits) {
    Vector p = (logits.array() - logits.maxCoeff()).exp();
    return p / p.sum();
  }

  static Vector softmax_backward(const Vector& lambda, const Vector& glambda) {
    const double mix = lambda.dot(glambda);
    return (lambda.array() * (glambda.array() - mix)).matrix();
  }

 private:
  Matrix z_;  // n x D normalized embeddings
  Index r_;
  Index d_;
  double m_gamma_;
};

/// Gradient-descent training of V and lambda with the RFF map frozen. Warm
/// starts from the estimation fit; zero epochs returns that fit untouched
/// apart from the trained_by tag.
inline DmkdeModel fit_sgd(const Matrix& train, double gamma, Index D, Index r,
                          std::uint64_t seed, const OptimizerConfig& config,
                          std::vector<EpochLog>* log = nullptr) {
  DmkdeModel model = fit_estimation(train, gamma, D, r, seed);
  model.trained_by = TrainedBy::sgd;
  if (config.epochs == 0) return model;

  Matrix z = apply_rff_normalized_rows(model.rff, train);
  DmkdeObjective objective(std::move(z), model.rho.rank(), model.norm_const);
  Vector logits =
      model.rho.lambda.cwiseMax(1e-12).array().log().matrix();
  Vector params = objective.pack(model.rho.v, logits);

  auto batch_fn = [&objective](const Vector& p, const std::vector<Index>& batch,
                               Vector& grad) {
    return objective.loss_and_grad(p, batch, &grad);
  };
  std::vector<EpochLog> logs = run_sgd(params, batch_fn, train.rows(), config);
  if (log) *log = logs;

  model.rho.v = objective.unpack_v(params);
  model.rho.lambda = objective.unpack_lambda(params);
  return model;
}

/// Categorical reduction: with the one-hot feature map the estimated density
/// matrix is diagonal and rho_ii is the relative frequency of category i.
inline DenseDensityMatrix categorical_density_matrix(const std::vector<Index>& samples,
                                                     Index num_categories) {
  require(num_categories >= 1, "categorical density: K must be >= 1");
  require(!samples.empty(), "categorical density: empty sample set");
  DensityAccumulator acc(num_categories);
  for (Index x : samples) acc.add(one_hot(x, num_categories));
  return acc.finalize();
}

inline Vector categorical_density_diag(const std::vector<Index>& samples,
                                       Index num_categories) {
  return categorical_density_matrix(samples, num_categories).entries.diagonal();
}

}  // namespace densmat
