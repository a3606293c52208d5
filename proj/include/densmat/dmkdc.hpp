#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "densmat/dmkde.hpp"

namespace densmat {

/// Kernel density classifier: one factorized density matrix per class over a
/// shared RFF map, plus class priors. Posteriors are prior-weighted Born
/// densities; the 1/M_gamma factor is constant across classes and cancels, so
/// it is never applied here.
struct DmkdcModel {
  RffMap rff;  // built for gamma/2, shared by all classes
  std::vector<FactorizedDensityMatrix> per_class;
  Vector priors;
  double gamma = 0.0;
  Index dim_in = 0;
  TrainedBy trained_by = TrainedBy::estimation;
  Index requested_rank = 0;
  std::uint64_t seed = 0;

  Index num_classes() const { return static_cast<Index>(per_class.size()); }
};

namespace detail {

/// Labels must be the integers 1..K with every class populated; returns K.
inline Index validate_class_labels(const Vector& labels) {
  require(labels.size() >= 1, "class labels: empty label vector");
  Index k = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    const double value = labels[i];
    require(value == std::floor(value) && value >= 1.0,
            "class labels: labels must be integers in 1..K");
    k = std::max(k, static_cast<Index>(value));
  }
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < labels.size(); ++i) {
    ++counts[static_cast<std::size_t>(labels[i]) - 1];
  }
  for (Index c = 0; c < k; ++c) {
    require(counts[static_cast<std::size_t>(c)] > 0,
            "class labels: class " + std::to_string(c + 1) + " has no samples");
  }
  return k;
}

}  // namespace detail

/// Per-class estimation: priors are class frequencies, each rho_i is the
/// averaged outer product of that class's normalized embeddings.
inline DmkdcModel fit_estimation(const Matrix& train, const Vector& labels, double gamma,
                                 Index D, Index r, std::uint64_t seed) {
  require(train.rows() == labels.size(), "dmkdc fit: feature/label count mismatch");
  require(gamma > 0.0, "dmkdc fit: gamma must be positive");
  require(r >= 1 && r <= D, "dmkdc fit: rank must be in 1..D");
  const Index k = detail::validate_class_labels(labels);

  DmkdcModel model;
  model.rff = build_rff(train.cols(), D, gamma / 2.0, seed);
  model.gamma = gamma;
  model.dim_in = train.cols();
  model.requested_rank = r;
  model.seed = seed;
  model.trained_by = TrainedBy::estimation;
  model.priors.resize(k);
  model.per_class.resize(static_cast<std::size_t>(k));

  Matrix z = apply_rff_normalized_rows(model.rff, train);
  for (Index c = 0; c < k; ++c) {
    std::vector<Index> members;
    for (Index i = 0; i < labels.size(); ++i) {
      if (static_cast<Index>(labels[i]) == c + 1) members.push_back(i);
    }
    Matrix zc(static_cast<Index>(members.size()), z.cols());
    for (std::size_t i = 0; i < members.size(); ++i) {
      zc.row(static_cast<Index>(i)) = z.row(members[i]);
    }
    model.priors[c] =
        static_cast<double>(members.size()) / static_cast<double>(train.rows());
    model.per_class[static_cast<std::size_t>(c)] =
        detail::factorize_embeddings(zc, r, true);
  }
  return model;
}

/// Per-class Born values (unnormalized class densities, no 1/M factor).
inline Vector class_densities(const DmkdcModel& model, const Eigen::Ref<const Vector>& x) {
  Vector z = apply_rff_normalized(model.rff, x);
  Vector out(model.num_classes());
  for (Index c = 0; c < model.num_classes(); ++c) {
    out[c] = quadratic_form(model.per_class[static_cast<std::size_t>(c)], z);
  }
  return out;
}

/// Posterior pi_i y_i / sum_j pi_j y_j. When every class density underflows
/// the posterior falls back to uniform and the degenerate flag is raised.
inline Vector posterior(const DmkdcModel& model, const Eigen::Ref<const Vector>& x,
                        bool* degenerate = nullptr) {
  Vector weighted = model.priors.cwiseProduct(class_densities(model, x));
  const double total = weighted.sum();
  if (degenerate) *degenerate = false;
  if (!(total > 1e-300)) {
    if (degenerate) *degenerate = true;
    return Vector::Constant(model.num_classes(),
                            1.0 / static_cast<double>(model.num_classes()));
  }
  return weighted / total;
}

/// Argmax of the posterior; ties resolve to the lowest class index.
inline Index classify(const DmkdcModel& model, const Eigen::Ref<const Vector>& x) {
  Vector post = posterior(model, x);
  Index best = 0;
  for (Index c = 1; c < post.size(); ++c) {
    if (post[c] > post[best]) best = c;
  }
  return best + 1;
}

inline double accuracy(const DmkdcModel& model, const Matrix& features,
                       const Vector& labels) {
  require(features.rows() == labels.size(), "accuracy: feature/label count mismatch");
  Index hits = 0;
  for (Index i = 0; i < features.rows(); ++i) {
    if (classify(model, features.row(i).transpose()) == static_cast<Index>(labels[i])) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(features.rows());
}

/// Cross-entropy objective over the prior-weighted posteriors. Parameters are
/// the per-class [vec(V_i) | logits_i] blocks concatenated; priors stay fixed.
class DmkdcObjective {
 public:
  DmkdcObjective(Matrix embeddings, std::vector<Index> class_index, Vector priors,
                 Index rank)
      : z_(std::move(embeddings)),
        class_(std::move(class_index)),
        priors_(std::move(priors)),
        r_(rank),
        d_(z_.cols()),
        k_(priors_.size()) {}

  Index block_size() const { return r_ * d_ + r_; }
  Index param_count() const { return k_ * block_size(); }
  Index sample_count() const { return z_.rows(); }

  Vector pack(const std::vector<FactorizedDensityMatrix>& per_class,
              const std::vector<Vector>& logits) const {
    Vector params(param_count());
    for (Index c = 0; c < k_; ++c) {
      auto block = params.segment(c * block_size(), block_size());
      const Matrix& v = per_class[static_cast<std::size_t>(c)].v;
      block.head(r_ * d_) = Eigen::Map<const Vector>(v.data(), r_ * d_);
      block.tail(r_) = logits[static_cast<std::size_t>(c)];
    }
    return params;
  }

  Matrix unpack_v(const Vector& params, Index c) const {
    return Eigen::Map<const Matrix>(params.data() + c * block_size(), r_, d_);
  }

  Vector unpack_lambda(const Vector& params, Index c) const {
    return DmkdeObjective::softmax(params.segment(c * block_size() + r_ * d_, r_));
  }

  std::string param_name(Index i) const {
    const Index c = i / block_size();
    const Index within = i % block_size();
    const std::string tag = "class" + std::to_string(c + 1);
    if (within < r_ * d_) {
      return tag + ".V(" + std::to_string(within % r_) + "," +
             std::to_string(within / r_) + ")";
    }
    return tag + ".theta[" + std::to_string(within - r_ * d_) + "]";
  }

  double loss_and_grad(const Vector& params, const std::vector<Index>& batch,
                       Vector* grad) const {
    const Index b = static_cast<Index>(batch.size());
    Matrix zb(b, d_);
    for (Index i = 0; i < b; ++i) zb.row(i) = z_.row(batch[static_cast<std::size_t>(i)]);

    std::vector<Eigen::Map<const Matrix>> v;
    std::vector<Vector> lambda(static_cast<std::size_t>(k_));
    std::vector<Matrix> u(static_cast<std::size_t>(k_));
    Matrix densities(k_, b);  // y~_i per sample
    for (Index c = 0; c < k_; ++c) {
      v.emplace_back(params.data() + c * block_size(), r_, d_);
      lambda[static_cast<std::size_t>(c)] =
          DmkdeObjective::softmax(params.segment(c * block_size() + r_ * d_, r_));
      u[static_cast<std::size_t>(c)] = v[static_cast<std::size_t>(c)] * zb.transpose();
      densities.row(c) = (u[static_cast<std::size_t>(c)].cwiseAbs2().transpose() *
                          lambda[static_cast<std::size_t>(c)])
                             .transpose();
    }

    Vector totals = (priors_.transpose() * densities).transpose();  // b
    double loss = 0.0;
    Vector active = Vector::Zero(b);
    for (Index i = 0; i < b; ++i) {
      const Index c = class_[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
      const double post = priors_[c] * densities(c, i) / std::max(totals[i], 1e-300);
      if (post > 1e-30) {
        loss -= std::log(post);
        active[i] = 1.0;
      } else {
        loss -= std::log(1e-30);
      }
    }

    if (grad) {
      // d(-log post_c)/d y~_i = pi_i / S           for all i,
      //                        - 1 / y~_c          extra for the true class.
      Matrix gdens(k_, b);
      for (Index i = 0; i < b; ++i) {
        if (active[i] == 0.0) {
          gdens.col(i).setZero();
          continue;
        }
        const Index c =
            class_[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
        gdens.col(i) = priors_ / std::max(totals[i], 1e-300);
        gdens(c, i) -= 1.0 / std::max(densities(c, i), 1e-300);
      }
      for (Index c = 0; c < k_; ++c) {
        const Matrix& uc = u[static_cast<std::size_t>(c)];
        const Vector& lc = lambda[static_cast<std::size_t>(c)];
        Matrix gu =
            2.0 * (lc.asDiagonal() * uc * gdens.row(c).transpose().asDiagonal());
        auto block = grad->segment(c * block_size(), block_size());
        Eigen::Map<Matrix>(block.data(), r_, d_) = gu * zb;
        Vector glambda = uc.cwiseAbs2() * gdens.row(c).transpose();
        block.tail(r_) = DmkdeObjective::softmax_backward(lc, glambda);
      }
    }
    return loss;
  }

 private:
  Matrix z_;
  std::vector<Index> class_;  // 0-based true class per sample
  Vector priors_;
  Index r_;
  Index d_;
  Index k_;
};

/// Cross-entropy SGD over {V_i, lambda_i} with the RFF map and the priors
/// frozen. Warm starts from estimation; zero epochs returns that model.
inline DmkdcModel fit_sgd(const Matrix& train, const Vector& labels, double gamma,
                          Index D, Index r, std::uint64_t seed,
                          const OptimizerConfig& config,
                          std::vector<EpochLog>* log = nullptr) {
  DmkdcModel model = fit_estimation(train, labels, gamma, D, r, seed);
  model.trained_by = TrainedBy::sgd;
  if (config.epochs == 0) return model;

  // Classes may have factorized to different effective ranks; pad with zero
  // components so one block size fits all.
  Index rank = 0;
  for (const auto& rho : model.per_class) rank = std::max(rank, rho.rank());
  std::vector<Vector> logits;
  for (auto& rho : model.per_class) {
    if (rho.rank() < rank) {
      Matrix v = Matrix::Zero(rank, rho.dim());
      Vector l = Vector::Zero(rank);
      v.topRows(rho.rank()) = rho.v;
      l.head(rho.rank()) = rho.lambda;
      rho.v = v;
      rho.lambda = l;
    }
    logits.push_back(rho.lambda.cwiseMax(1e-12).array().log().matrix());
  }

  Matrix z = apply_rff_normalized_rows(model.rff, train);
  std::vector<Index> class_index(static_cast<std::size_t>(labels.size()));
  for (Index i = 0; i < labels.size(); ++i) {
    class_index[static_cast<std::size_t>(i)] = static_cast<Index>(labels[i]) - 1;
  }
  DmkdcObjective objective(std::move(z), std::move(class_index), model.priors, rank);
  Vector params = objective.pack(model.per_class, logits);

  auto batch_fn = [&objective](const Vector& p, const std::vector<Index>& batch,
                               Vector& grad) {
    return objective.loss_and_grad(p, batch, &grad);
  };
  std::vector<EpochLog> logs = run_sgd(params, batch_fn, train.rows(), config);
  if (log) *log = logs;

  for (Index c = 0; c < model.num_classes(); ++c) {
    model.per_class[static_cast<std::size_t>(c)].v = objective.unpack_v(params, c);
    model.per_class[static_cast<std::size_t>(c)].lambda =
        objective.unpack_lambda(params, c);
  }
  return model;
}

}  // namespace densmat
