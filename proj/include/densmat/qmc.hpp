#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "densmat/dmkde.hpp"

namespace densmat {

/// Input-side quantum feature map: normalized RFF for real vectors, or
/// one-hot over categories (the category is carried in x[0]).
struct QmcInputMap {
  enum class Kind { rff, one_hot };
  Kind kind = Kind::rff;
  RffMap rff;
  Index categories = 0;

  static QmcInputMap make_rff(RffMap map) {
    QmcInputMap m;
    m.kind = Kind::rff;
    m.rff = std::move(map);
    return m;
  }
  static QmcInputMap make_one_hot(Index k) {
    QmcInputMap m;
    m.kind = Kind::one_hot;
    m.categories = k;
    return m;
  }

  Index dim() const { return kind == Kind::rff ? rff.dim_out() : categories; }

  Vector operator()(const Eigen::Ref<const Vector>& x) const {
    if (kind == Kind::rff) return apply_rff_normalized(rff, x);
    return one_hot(static_cast<Index>(x[0]), categories);
  }
};

/// Output-side map: one-hot over classes or landmark-softmax over [0, 1].
struct QmcOutputMap {
  enum class Kind { one_hot, softmax };
  Kind kind = Kind::one_hot;
  Index categories = 0;
  std::optional<SoftmaxMap> sm;

  static QmcOutputMap make_one_hot(Index k) {
    QmcOutputMap m;
    m.kind = Kind::one_hot;
    m.categories = k;
    return m;
  }
  static QmcOutputMap make_softmax(Index landmarks, double beta) {
    QmcOutputMap m;
    m.kind = Kind::softmax;
    m.sm.emplace(landmarks, beta);
    return m;
  }

  Index dim() const { return kind == Kind::one_hot ? categories : sm->dim(); }

  Vector operator()(double y) const {
    if (kind == Kind::one_hot) return one_hot(static_cast<Index>(y), categories);
    return apply_softmax_map(*sm, y);
  }
};

/// Joint-space classifier: a factorized density matrix over the tensor
/// product of the input and output feature spaces. Prediction collapses the
/// input subsystem onto the query embedding and traces it out.
struct QmcModel {
  QmcInputMap input_map;
  QmcOutputMap output_map;
  FactorizedDensityMatrix joint;
  TrainedBy trained_by = TrainedBy::estimation;
  Index requested_rank = 0;

  Index dim_x() const { return input_map.dim(); }
  Index dim_y() const { return output_map.dim(); }
};

/// Streaming low-rank estimate of sum_i c_i w_i w_i^T. Rows accumulate into a
/// buffer of 4r slots; when it fills, a Gram-route eigendecomposition keeps
/// the top r components and frees the rest. Exact whenever fewer than 4r
/// vectors were ever added; otherwise a controlled truncation. This is how
/// the joint matrix stays off the Dx*Dy x Dx*Dy scale during estimation.
class LowRankAccumulator {
 public:
  LowRankAccumulator(Index dim, Index target_rank)
      : dim_(dim),
        target_rank_(target_rank),
        capacity_(std::max<Index>(4 * target_rank, 8)),
        rows_(capacity_, dim),
        weights_(capacity_) {
    require(dim >= 1, "LowRankAccumulator: dimension must be >= 1");
    require(target_rank >= 1 && target_rank <= dim,
            "LowRankAccumulator: rank must be in 1..dim");
  }

  void add(const Eigen::Ref<const Vector>& w, double weight) {
    require(w.size() == dim_, "LowRankAccumulator: vector has wrong dimension");
    if (used_ == capacity_) compress(target_rank_);
    rows_.row(used_) = w.transpose();
    weights_[used_] = weight;
    ++used_;
  }

  FactorizedDensityMatrix finalize(bool renormalize = false) {
    require(used_ >= 1, "LowRankAccumulator: nothing accumulated");
    return factorize_gram(rows_.topRows(used_), weights_.head(used_), target_rank_,
                          renormalize);
  }

 private:
  void compress(Index keep) {
    FactorizedDensityMatrix low =
        factorize_gram(rows_.topRows(used_), weights_.head(used_), keep);
    used_ = low.rank();
    rows_.topRows(used_) = low.v;
    weights_.head(used_) = low.lambda;
  }

  Index dim_;
  Index target_rank_;
  Index capacity_;
  Matrix rows_;
  Vector weights_;
  Index used_ = 0;
};

inline Index qmc_default_rank(Index n, Index dim_joint) {
  return std::min<Index>({n, dim_joint, 512});
}

/// Estimation training: average the outer products of the tensor-product
/// embeddings phi_X(x_i) (x) phi_Y(y_i), truncated to rank r on the fly.
inline QmcModel fit_estimation(const Matrix& train, const Vector& targets,
                               QmcInputMap input_map, QmcOutputMap output_map, Index r) {
  const Index n = train.rows();
  require(n >= 1, "qmc fit: need at least one pair");
  require(targets.size() == n, "qmc fit: feature/target count mismatch");
  const Index dim_joint = input_map.dim() * output_map.dim();
  require(r >= 1 && r <= dim_joint, "qmc fit: rank must be in 1..Dx*Dy");

  QmcModel model;
  model.input_map = std::move(input_map);
  model.output_map = std::move(output_map);
  model.requested_rank = r;
  model.trained_by = TrainedBy::estimation;

  LowRankAccumulator acc(dim_joint, r);
  const double weight = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    Vector zx = model.input_map(train.row(i).transpose());
    Vector zy = model.output_map(targets[i]);
    acc.add(tensor_embed(zx, zy), weight);
  }
  model.joint = acc.finalize();
  return model;
}

/// Collapse-based prediction: the output-side density matrix, its diagonal
/// (a distribution over output basis states) and the evidence.
struct QmcPrediction {
  DenseDensityMatrix rho_y;
  Vector diag;
  double evidence = 0.0;
};

inline QmcPrediction predict_distribution(const QmcModel& model,
                                          const Eigen::Ref<const Vector>& x) {
  Vector zx = model.input_map(x);
  ConditionalState state =
      measure_and_collapse(model.joint, model.dim_x(), model.dim_y(), zx);
  QmcPrediction out;
  out.diag = state.rho_y.entries.diagonal();
  out.rho_y = std::move(state.rho_y);
  out.evidence = state.evidence;
  return out;
}

/// Argmax of the predicted distribution, as a 1..K class label.
inline Index classify(const QmcModel& model, const Eigen::Ref<const Vector>& x) {
  Vector diag = predict_distribution(model, x).diag;
  Index best = 0;
  for (Index c = 1; c < diag.size(); ++c) {
    if (diag[c] > diag[best]) best = c;
  }
  return best + 1;
}

inline double accuracy(const QmcModel& model, const Matrix& features,
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

/// Negative log-likelihood of the collapsed diagonal at the true class,
/// differentiated through the collapse shortcut. Parameters are
/// [vec(V) | lambda-logits] of the joint factorization; the input embeddings
/// are frozen.
class QmcObjective {
 public:
  QmcObjective(Matrix zx_rows, std::vector<Index> class_index, Index rank, Index dim_x,
               Index dim_y)
      : zx_(std::move(zx_rows)),
        class_(std::move(class_index)),
        r_(rank),
        dx_(dim_x),
        dy_(dim_y) {}

  Index param_count() const { return r_ * dx_ * dy_ + r_; }
  Index sample_count() const { return zx_.rows(); }

  Vector pack(const FactorizedDensityMatrix& joint, const Vector& logits) const {
    Vector params(param_count());
    params.head(r_ * dx_ * dy_) =
        Eigen::Map<const Vector>(joint.v.data(), r_ * dx_ * dy_);
    params.tail(r_) = logits;
    return params;
  }

  Matrix unpack_v(const Vector& params) const {
    return Eigen::Map<const Matrix>(params.data(), r_, dx_ * dy_);
  }

  Vector unpack_lambda(const Vector& params) const {
    return DmkdeObjective::softmax(params.tail(r_));
  }

  std::string param_name(Index i) const {
    if (i < r_ * dx_ * dy_) {
      return "V(" + std::to_string(i % r_) + "," + std::to_string(i / r_) + ")";
    }
    return "theta[" + std::to_string(i - r_ * dx_ * dy_) + "]";
  }

  double loss_and_grad(const Vector& params, const std::vector<Index>& batch,
                       Vector* grad) const {
    const Index b = static_cast<Index>(batch.size());
    Matrix zxb(b, dx_);
    std::vector<Index> cls(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) {
      zxb.row(i) = zx_.row(batch[static_cast<std::size_t>(i)]);
      cls[static_cast<std::size_t>(i)] =
          class_[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
    }

    Eigen::Map<const Matrix> vflat(params.data(), r_, dx_ * dy_);
    const Vector lambda = DmkdeObjective::softmax(params.tail(r_));

    // a_k = V_k^T zx per component, batched: A[k] is b x dy.
    std::vector<Matrix> a(static_cast<std::size_t>(r_));
    Matrix raw_diag = Matrix::Zero(b, dy_);  // s_bi = sum_k lambda_k a_ki^2
    Vector row(dx_ * dy_);
    for (Index k = 0; k < r_; ++k) {
      row = vflat.row(k);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          vk(row.data(), dx_, dy_);
      a[static_cast<std::size_t>(k)] = zxb * vk;
      raw_diag += lambda[k] * a[static_cast<std::size_t>(k)].cwiseAbs2();
    }
    Vector evidence = raw_diag.rowwise().sum().cwiseMax(1e-300);

    double loss = 0.0;
    Vector true_raw(b);
    Vector active = Vector::Zero(b);
    for (Index i = 0; i < b; ++i) {
      const Index c = cls[static_cast<std::size_t>(i)];
      true_raw[i] = raw_diag(i, c);
      const double prob = true_raw[i] / evidence[i];
      if (prob > 1e-30) {
        loss -= std::log(prob);
        active[i] = 1.0;
      } else {
        loss -= std::log(1e-30);
      }
    }

    if (grad) {
      // dL/ds_bi = 1/E_b - [i = c_b] / s_bc
      Matrix gs(b, dy_);
      for (Index i = 0; i < b; ++i) {
        if (active[i] == 0.0) {
          gs.row(i).setZero();
          continue;
        }
        gs.row(i).setConstant(1.0 / evidence[i]);
        gs(i, cls[static_cast<std::size_t>(i)]) -= 1.0 / std::max(true_raw[i], 1e-300);
      }
      Vector glambda = Vector::Zero(r_);
      Eigen::Map<Matrix> gv(grad->data(), r_, dx_ * dy_);
      for (Index k = 0; k < r_; ++k) {
        const Matrix& ak = a[static_cast<std::size_t>(k)];
        glambda[k] = (gs.array() * ak.array().square()).sum();
        Matrix ga = 2.0 * lambda[k] * gs.cwiseProduct(ak);  // b x dy
        Matrix gvk = zxb.transpose() * ga;                  // dx x dy
        for (Index aa = 0; aa < dx_; ++aa) {
          gv.row(k).segment(aa * dy_, dy_) = gvk.row(aa);  // row-major flatten
        }
      }
      grad->tail(r_) = DmkdeObjective::softmax_backward(lambda, glambda);
    }
    return loss;
  }

 private:
  Matrix zx_;                 // n x dx frozen input embeddings
  std::vector<Index> class_;  // 0-based output category per sample
  Index r_;
  Index dx_;
  Index dy_;
};

/// SGD refinement of the joint factorization; input map frozen, one-hot
/// output map required (the loss reads the true-class diagonal entry).
inline QmcModel fit_sgd(const Matrix& train, const Vector& targets, QmcInputMap input_map,
                        QmcOutputMap output_map, Index r, const OptimizerConfig& config,
                        std::vector<EpochLog>* log = nullptr) {
  require(output_map.kind == QmcOutputMap::Kind::one_hot,
          "qmc fit_sgd: one-hot output map required");
  QmcModel model =
      fit_estimation(train, targets, std::move(input_map), std::move(output_map), r);
  model.trained_by = TrainedBy::sgd;
  if (config.epochs == 0) return model;

  const Index n = train.rows();
  Matrix zx(n, model.dim_x());
  for (Index i = 0; i < n; ++i) {
    zx.row(i) = model.input_map(train.row(i).transpose()).transpose();
  }
  std::vector<Index> class_index(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    class_index[static_cast<std::size_t>(i)] = static_cast<Index>(targets[i]) - 1;
  }

  QmcObjective objective(std::move(zx), std::move(class_index), model.joint.rank(),
                         model.dim_x(), model.dim_y());
  Vector logits = model.joint.lambda.cwiseMax(1e-12).array().log().matrix();
  Vector params = objective.pack(model.joint, logits);

  auto batch_fn = [&objective](const Vector& p, const std::vector<Index>& batch,
                               Vector& grad) {
    return objective.loss_and_grad(p, batch, &grad);
  };
  std::vector<EpochLog> logs = run_sgd(params, batch_fn, n, config);
  if (log) *log = logs;

  model.joint.v = objective.unpack_v(params);
  model.joint.lambda = objective.unpack_lambda(params);
  return model;
}

}  // namespace densmat
