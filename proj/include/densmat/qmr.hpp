#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "densmat/qmc.hpp"

namespace densmat {

/// Affine map between the original target range and the [0, 1] interval the
/// landmark encoding lives on. A constant target column maps to 0.5.
struct TargetScaler {
  double min = 0.0;
  double max = 1.0;

  static TargetScaler fit(const Vector& targets) {
    require(targets.size() >= 1, "TargetScaler: empty target vector");
    TargetScaler s;
    s.min = targets.minCoeff();
    s.max = targets.maxCoeff();
    if (!(s.max - s.min > 0.0)) {
      s.min -= 0.5;
      s.max += 0.5;
    }
    return s;
  }

  double span() const { return max - min; }
  double to_unit(double y) const { return (y - min) / span(); }
  double from_unit(double u) const { return min + span() * u; }
};

/// Ordinal/metric regressor: QMC with a landmark-softmax output map. The
/// prediction is the expectation of the landmarks under the collapsed
/// distribution; its variance doubles as an uncertainty estimate.
struct QmrModel {
  QmcModel base;
  double alpha_tradeoff = 0.5;  // error/variance trade-off of the SGD loss
  TargetScaler scaler;
};

struct QmrPrediction {
  double y_hat = 0.0;        // in original target units
  double variance = 0.0;     // in original units squared
  double y_hat_unit = 0.0;   // in [0, 1]
  double variance_unit = 0.0;
  Vector distribution;       // collapsed diagonal over the landmarks
};

inline QmrPrediction predict(const QmrModel& model, const Eigen::Ref<const Vector>& x) {
  QmcPrediction raw = predict_distribution(model.base, x);
  const Vector& alphas = model.base.output_map.sm->landmarks();
  QmrPrediction out;
  out.distribution = raw.diag;
  out.y_hat_unit = raw.diag.dot(alphas);
  out.variance_unit = raw.diag.dot((alphas.array() - out.y_hat_unit).square().matrix());
  out.y_hat = model.scaler.from_unit(out.y_hat_unit);
  out.variance = model.scaler.span() * model.scaler.span() * out.variance_unit;
  return out;
}

inline QmrModel fit_estimation(const Matrix& train, const Vector& targets, double gamma,
                               Index rff_dim, Index landmarks, double beta, Index r,
                               std::uint64_t seed) {
  require(gamma > 0.0, "qmr fit: gamma must be positive");
  QmrModel model;
  model.scaler = TargetScaler::fit(targets);
  Vector unit = (targets.array() - model.scaler.min) / model.scaler.span();
  model.base = fit_estimation(
      train, unit,
      QmcInputMap::make_rff(build_rff(train.cols(), rff_dim, gamma / 2.0, seed)),
      QmcOutputMap::make_softmax(landmarks, beta), r);
  return model;
}

/// Nearest class anchor for a unit-space prediction with K ordinal classes
/// (anchors (c-1)/(K-1)); ties resolve to the lower class.
inline Index nearest_class(double y_unit, Index num_classes) {
  require(num_classes >= 2, "nearest_class: need at least two classes");
  Index best = 1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index c = 1; c <= num_classes; ++c) {
    const double anchor = static_cast<double>(c - 1) / static_cast<double>(num_classes - 1);
    const double dist = std::abs(y_unit - anchor);
    if (dist < best_dist - 1e-15) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

inline Index predict_class(const QmrModel& model, const Eigen::Ref<const Vector>& x,
                           Index num_classes) {
  return nearest_class(predict(model, x).y_hat_unit, num_classes);
}

/// Mean absolute error over integer class labels.
inline double mae(const Vector& predicted, const Vector& truth) {
  require(predicted.size() == truth.size(), "mae: length mismatch");
  require(predicted.size() >= 1, "mae: empty inputs");
  return (predicted - truth).cwiseAbs().mean();
}

/// Equal-width discretization of real targets into 1..bins; the maximum lands
/// in the top bin.
struct OrdinalBinning {
  Vector labels;
  Vector edges;  // bins + 1 boundaries
};

inline OrdinalBinning ordinal_bin(const Vector& targets, Index bins = 5) {
  require(bins >= 2, "ordinal_bin: need at least two bins");
  const double lo = targets.minCoeff();
  const double hi = targets.maxCoeff();
  require(hi > lo, "ordinal_bin: targets are constant");
  OrdinalBinning out;
  out.edges.resize(bins + 1);
  for (Index b = 0; b <= bins; ++b) {
    out.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  out.labels.resize(targets.size());
  const double width = (hi - lo) / static_cast<double>(bins);
  for (Index i = 0; i < targets.size(); ++i) {
    Index b = static_cast<Index>(std::floor((targets[i] - lo) / width));
    b = std::min(b, bins - 1);
    out.labels[i] = static_cast<double>(b + 1);
  }
  return out;
}

/// Average predicted landmark distribution per true class (K x D, rows are
/// distributions). Used for the per-class prediction-profile analysis.
inline Matrix average_distribution_by_class(const QmrModel& model, const Matrix& features,
                                            const Vector& labels, Index num_classes) {
  require(features.rows() == labels.size(), "feature/label count mismatch");
  Matrix sums = Matrix::Zero(num_classes, model.base.dim_y());
  Vector counts = Vector::Zero(num_classes);
  for (Index i = 0; i < features.rows(); ++i) {
    const Index c = static_cast<Index>(labels[i]) - 1;
    require(c >= 0 && c < num_classes, "label out of range");
    sums.row(c) += predict(model, features.row(i).transpose()).distribution.transpose();
    counts[c] += 1.0;
  }
  for (Index c = 0; c < num_classes; ++c) {
    if (counts[c] > 0.0) sums.row(c) /= counts[c];
  }
  return sums;
}

/// Prediction-variance statistics grouped by |predicted class - true class|.
struct ErrorGroupStat {
  Index abs_error = 0;
  Index count = 0;
  double mean_variance = 0.0;
  double min_variance = 0.0;
  double max_variance = 0.0;
};

inline std::vector<ErrorGroupStat> variance_by_error_group(const Vector& predicted,
                                                           const Vector& truth,
                                                           const Vector& variances) {
  require(predicted.size() == truth.size() && truth.size() == variances.size(),
          "variance_by_error_group: length mismatch");
  std::map<Index, std::vector<double>> groups;
  for (Index i = 0; i < predicted.size(); ++i) {
    const Index err = static_cast<Index>(std::llround(std::abs(predicted[i] - truth[i])));
    groups[err].push_back(variances[i]);
  }
  std::vector<ErrorGroupStat> out;
  for (const auto& [err, vals] : groups) {
    ErrorGroupStat stat;
    stat.abs_error = err;
    stat.count = static_cast<Index>(vals.size());
    stat.min_variance = *std::min_element(vals.begin(), vals.end());
    stat.max_variance = *std::max_element(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    stat.mean_variance = sum / static_cast<double>(vals.size());
    out.push_back(stat);
  }
  return out;
}

/// Variance-regularized squared-error objective of the regression model,
/// differentiated through the collapse, the embedding normalization and the
/// cosine features. Parameters: [vec(W) | b | vec(V) | lambda-logits | beta].
/// beta shapes only the output encoding used at estimation time; it has no
/// path into this loss, so its analytic gradient is identically zero (the
/// finite-difference audit confirms it). It is carried so the optimizer
/// contract, including the positivity floor, is uniform.
class QmrObjective {
 public:
  QmrObjective(Matrix features, Vector unit_targets, Vector alphas, Index rank,
               Index rff_dim, double alpha_tradeoff)
      : x_(std::move(features)),
        y_(std::move(unit_targets)),
        alphas_(std::move(alphas)),
        r_(rank),
        dx_(rff_dim),
        dy_(alphas_.size()),
        in_(x_.cols()),
        alpha_tradeoff_(alpha_tradeoff) {}

  Index offset_w() const { return 0; }
  Index offset_b() const { return dx_ * in_; }
  Index offset_v() const { return offset_b() + dx_; }
  Index offset_logits() const { return offset_v() + r_ * dx_ * dy_; }
  Index offset_beta() const { return offset_logits() + r_; }
  Index param_count() const { return offset_beta() + 1; }
  Index sample_count() const { return x_.rows(); }

  Vector pack(const RffMap& rff, const FactorizedDensityMatrix& joint,
              const Vector& logits, double beta) const {
    Vector params(param_count());
    params.segment(offset_w(), dx_ * in_) =
        Eigen::Map<const Vector>(rff.weights.data(), dx_ * in_);
    params.segment(offset_b(), dx_) = rff.biases;
    params.segment(offset_v(), r_ * dx_ * dy_) =
        Eigen::Map<const Vector>(joint.v.data(), r_ * dx_ * dy_);
    params.segment(offset_logits(), r_) = logits;
    params[offset_beta()] = beta;
    return params;
  }

  Matrix unpack_w(const Vector& params) const {
    return Eigen::Map<const Matrix>(params.data() + offset_w(), dx_, in_);
  }
  Vector unpack_b(const Vector& params) const { return params.segment(offset_b(), dx_); }
  Matrix unpack_v(const Vector& params) const {
    return Eigen::Map<const Matrix>(params.data() + offset_v(), r_, dx_ * dy_);
  }
  Vector unpack_lambda(const Vector& params) const {
    return DmkdeObjective::softmax(params.segment(offset_logits(), r_));
  }
  double unpack_beta(const Vector& params) const { return params[offset_beta()]; }

  std::string param_name(Index i) const {
    if (i < offset_b()) return "W(" + std::to_string(i % dx_) + "," + std::to_string(i / dx_) + ")";
    if (i < offset_v()) return "b[" + std::to_string(i - offset_b()) + "]";
    if (i < offset_logits()) {
      const Index j = i - offset_v();
      return "V(" + std::to_string(j % r_) + "," + std::to_string(j / r_) + ")";
    }
    if (i < offset_beta()) return "theta[" + std::to_string(i - offset_logits()) + "]";
    return "beta";
  }

  double loss_and_grad(const Vector& params, const std::vector<Index>& batch,
                       Vector* grad) const {
    const Index b = static_cast<Index>(batch.size());
    Matrix xb(b, in_);
    Vector yb(b);
    for (Index i = 0; i < b; ++i) {
      xb.row(i) = x_.row(batch[static_cast<std::size_t>(i)]);
      yb[i] = y_[batch[static_cast<std::size_t>(i)]];
    }

    Eigen::Map<const Matrix> w(params.data() + offset_w(), dx_, in_);
    const Vector bias = params.segment(offset_b(), dx_);
    Eigen::Map<const Matrix> vflat(params.data() + offset_v(), r_, dx_ * dy_);
    const Vector lambda = DmkdeObjective::softmax(params.segment(offset_logits(), r_));

    // RFF forward with normalization.
    const double scale = std::sqrt(2.0 / static_cast<double>(dx_));
    Matrix pre = xb * w.transpose();
    pre.rowwise() += bias.transpose();
    Matrix zraw = scale * pre.array().cos().matrix();
    Vector norms = zraw.rowwise().norm();
    for (Index i = 0; i < b; ++i) {
      if (!(norms[i] > detail::kMinEmbeddingNorm)) {
        throw DegenerateEmbedding("qmr objective: zero-norm embedding in batch");
      }
    }
    Matrix zx = norms.cwiseInverse().asDiagonal() * zraw;

    // Collapse diagonal through the reshape shortcut.
    std::vector<Matrix> a(static_cast<std::size_t>(r_));
    Matrix raw_diag = Matrix::Zero(b, dy_);
    Vector row(dx_ * dy_);
    for (Index k = 0; k < r_; ++k) {
      row = vflat.row(k);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          vk(row.data(), dx_, dy_);
      a[static_cast<std::size_t>(k)] = zx * vk;
      raw_diag += lambda[k] * a[static_cast<std::size_t>(k)].cwiseAbs2();
    }
    Vector evidence = raw_diag.rowwise().sum().cwiseMax(1e-300);
    Matrix q = evidence.cwiseInverse().asDiagonal() * raw_diag;  // b x dy

    Vector y_hat = q * alphas_;
    double loss = 0.0;
    Matrix gq(b, dy_);
    for (Index i = 0; i < b; ++i) {
      const double err = yb[i] - y_hat[i];
      const Vector dev = (alphas_.array() - y_hat[i]).matrix();
      loss += err * err + alpha_tradeoff_ * q.row(i).dot(dev.cwiseAbs2());
      if (grad) {
        // On-manifold total derivative: the variance term's path through
        // y_hat cancels because sum_i q_i (y_hat - alpha_i) = 0.
        gq.row(i) = (-2.0 * err) * alphas_.transpose() +
                    alpha_tradeoff_ * dev.cwiseAbs2().transpose();
      }
    }
    if (!grad) return loss;

    // q_i = s_i / E: project the q-gradient onto the raw diagonal.
    Matrix gs(b, dy_);
    for (Index i = 0; i < b; ++i) {
      const double mix = gq.row(i).dot(q.row(i));
      gs.row(i) = (gq.row(i).array() - mix) / evidence[i];
    }

    Vector glambda = Vector::Zero(r_);
    Matrix gzx = Matrix::Zero(b, dx_);
    Eigen::Map<Matrix> gv(grad->data() + offset_v(), r_, dx_ * dy_);
    for (Index k = 0; k < r_; ++k) {
      row = vflat.row(k);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          vk(row.data(), dx_, dy_);
      const Matrix& ak = a[static_cast<std::size_t>(k)];
      glambda[k] = (gs.array() * ak.array().square()).sum();
      Matrix ga = 2.0 * lambda[k] * gs.cwiseProduct(ak);  // b x dy
      Matrix gvk = zx.transpose() * ga;                   // dx x dy
      for (Index aa = 0; aa < dx_; ++aa) {
        gv.row(k).segment(aa * dy_, dy_) = gvk.row(aa);
      }
      gzx += ga * vk.transpose();
    }
    grad->segment(offset_logits(), r_) =
        DmkdeObjective::softmax_backward(lambda, glambda);

    // Normalization backward: d(z/||z||) = (g - (g.zbar) zbar) / ||z||.
    Matrix graw(b, dx_);
    for (Index i = 0; i < b; ++i) {
      const double dot = gzx.row(i).dot(zx.row(i));
      graw.row(i) = (gzx.row(i) - dot * zx.row(i)) / norms[i];
    }
    // Cosine backward.
    Matrix gpre = (-scale) * pre.array().sin().matrix().cwiseProduct(graw);
    Eigen::Map<Matrix>(grad->data() + offset_w(), dx_, in_) = gpre.transpose() * xb;
    grad->segment(offset_b(), dx_) = gpre.colwise().sum();
    (*grad)[offset_beta()] = 0.0;
    return loss;
  }

 private:
  Matrix x_;
  Vector y_;      // targets already in [0, 1]
  Vector alphas_;
  Index r_;
  Index dx_;
  Index dy_;
  Index in_;
  double alpha_tradeoff_;
};

/// SGD training of the full chain (RFF weights and biases, joint
/// factorization, lambda logits; beta rides along under its positivity
/// floor). Warm starts from the estimation fit.
inline QmrModel fit_sgd(const Matrix& train, const Vector& targets, double gamma,
                        Index rff_dim, Index landmarks, double beta, Index r,
                        double alpha_tradeoff, std::uint64_t seed,
                        const OptimizerConfig& config,
                        std::vector<EpochLog>* log = nullptr) {
  require(alpha_tradeoff >= 0.0 && alpha_tradeoff <= 1.0,
          "qmr fit_sgd: alpha trade-off must be in [0, 1]");
  QmrModel model = fit_estimation(train, targets, gamma, rff_dim, landmarks, beta, r, seed);
  model.alpha_tradeoff = alpha_tradeoff;
  model.base.trained_by = TrainedBy::sgd;
  if (config.epochs == 0) return model;

  Vector unit = (targets.array() - model.scaler.min) / model.scaler.span();
  QmrObjective objective(train, unit, model.base.output_map.sm->landmarks(),
                         model.base.joint.rank(), rff_dim, alpha_tradeoff);
  Vector logits = model.base.joint.lambda.cwiseMax(1e-12).array().log().matrix();
  Vector params = objective.pack(model.base.input_map.rff, model.base.joint, logits,
                                 model.base.output_map.sm->beta());

  auto batch_fn = [&objective](const Vector& p, const std::vector<Index>& batch,
                               Vector& grad) {
    return objective.loss_and_grad(p, batch, &grad);
  };
  std::vector<EpochLog> logs = run_sgd(params, batch_fn, train.rows(), config);
  // beta positivity floor; a no-op while its gradient is zero.
  params[objective.offset_beta()] = std::max(params[objective.offset_beta()], 1e-6);
  if (log) *log = logs;

  model.base.input_map.rff.weights = objective.unpack_w(params);
  model.base.input_map.rff.biases = objective.unpack_b(params);
  model.base.joint.v = objective.unpack_v(params);
  model.base.joint.lambda = objective.unpack_lambda(params);
  model.base.output_map.sm->set_beta(std::max(objective.unpack_beta(params), 1e-6));
  return model;
}

}  // namespace densmat
