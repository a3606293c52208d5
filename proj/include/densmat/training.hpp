#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "densmat/random.hpp"
#include "densmat/types.hpp"

namespace densmat {

enum class OptimizerKind { adam, sgd };

/// Shared optimizer settings. The default learning rate sits at the top of
/// the (0, 0.001] search interval used throughout the experiments; larger
/// values are allowed but callers opt in explicitly.
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index batch_size = 64;
  Index epochs = 0;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // global-norm gradient clip; <= 0 disables

  void validate() const {
    require(learning_rate > 0.0, "OptimizerConfig: learning rate must be positive");
    require(batch_size >= 1, "OptimizerConfig: batch size must be >= 1");
    require(epochs >= 0, "OptimizerConfig: epochs must be >= 0");
  }
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

/// One bias-corrected Adam update. Deterministic; NaN gradients abort.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state,
                      const OptimizerConfig& config) {
  require(params.size() == grads.size(), "adam_step: shape mismatch");
  if (!grads.allFinite()) throw NumericFailure("adam_step: non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.m.array() / bias1) /
                    ((state.v.array() / bias2).sqrt() + config.epsilon);
}

inline void sgd_step(Vector& params, const Vector& grads, const OptimizerConfig& config) {
  require(params.size() == grads.size(), "sgd_step: shape mismatch");
  if (!grads.allFinite()) throw NumericFailure("sgd_step: non-finite gradient");
  params -= config.learning_rate * grads;
}

/// One row of a finite-difference audit of an analytic gradient.
struct GradientReport {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool flagged = false;
};

/// Central-difference check of analytic_grad against loss. Above max_coords
/// parameters a seeded coordinate sample is checked instead of all of them.
/// Entries with rel_error > 1e-4 come back flagged.
inline std::vector<GradientReport> finite_diff_check(
    const std::function<double(const Vector&)>& loss, const Vector& params,
    const Vector& analytic_grad, double h = 1e-5, Index max_coords = 1000,
    std::uint64_t seed = 0,
    const std::function<std::string(Index)>& name = {}) {
  require(params.size() == analytic_grad.size(), "finite_diff_check: shape mismatch");
  if (!std::isfinite(loss(params))) {
    throw NumericFailure("finite_diff_check: loss is not finite at the given parameters");
  }

  std::vector<Index> coords;
  if (params.size() <= max_coords) {
    for (Index i = 0; i < params.size(); ++i) coords.push_back(i);
  } else {
    std::vector<Index> order = shuffled_indices(params.size(), seed);
    coords.assign(order.begin(), order.begin() + max_coords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<GradientReport> reports;
  reports.reserve(coords.size());
  Vector probe = params;
  for (Index i : coords) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = loss(probe);
    probe[i] = keep - h;
    const double down = loss(probe);
    probe[i] = keep;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericFailure("finite_diff_check: loss is not finite near coordinate " +
                           std::to_string(i));
    }
    GradientReport report;
    report.parameter = name ? name(i) : ("p[" + std::to_string(i) + "]");
    report.analytic = analytic_grad[i];
    report.numeric = (up - down) / (2.0 * h);
    report.rel_error = std::abs(report.analytic - report.numeric) /
                       std::max(1e-12, std::abs(report.analytic) + std::abs(report.numeric));
    report.flagged = report.rel_error > 1e-4;
    reports.push_back(std::move(report));
  }
  return reports;
}

inline double max_rel_error(const std::vector<GradientReport>& reports) {
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.rel_error);
  return worst;
}

/// One training-log row; serialized as JSON lines by the CLI.
struct EpochLog {
  Index epoch = 0;
  double loss = 0.0;  // mean per-sample loss over the epoch
  double wall_seconds = 0.0;
};

/// Batch objective: fills grad (sized like params) and returns the summed
/// loss over the given sample indices.
using BatchObjective = std::function<double(const Vector& params,
                                            const std::vector<Index>& batch,
                                            Vector& grad)>;

/// Minibatch loop shared by every SGD-trained model: deterministic per-epoch
/// shuffling, optional global-norm clipping, Adam or plain SGD steps.
/// Raises NumericFailure naming the epoch/batch if the loss goes NaN.
inline std::vector<EpochLog> run_sgd(Vector& params, const BatchObjective& objective,
                                     Index n_samples, const OptimizerConfig& config) {
  config.validate();
  require(n_samples >= 1, "run_sgd: need at least one sample");
  require(n_samples >= config.batch_size, "run_sgd: fewer samples than batch size");

  AdamState state;
  Vector grad(params.size());
  std::vector<EpochLog> logs;
  logs.reserve(static_cast<std::size_t>(config.epochs));
  const auto t0 = std::chrono::steady_clock::now();

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Index> order =
        shuffled_indices(n_samples, derive_seed(config.seed, 0x5d00 + static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    Index batch_index = 0;
    for (Index start = 0; start < n_samples; start += config.batch_size, ++batch_index) {
      const Index len = std::min(config.batch_size, n_samples - start);
      std::vector<Index> batch(order.begin() + start, order.begin() + start + len);
      grad.setZero();
      const double loss = objective(params, batch, grad);
      if (!std::isfinite(loss)) {
        throw NumericFailure("run_sgd: NaN loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
      }
      epoch_loss += loss;
      if (config.clip_norm > 0.0) {
        const double norm = grad.norm();
        if (norm > config.clip_norm) grad *= config.clip_norm / norm;
      }
      if (config.kind == OptimizerKind::adam) {
        adam_step(params, grad, state, config);
      } else {
        sgd_step(params, grad, config);
      }
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    logs.push_back({epoch, epoch_loss / static_cast<double>(n_samples), elapsed});
  }
  return logs;
}

/// Rolling 5-epoch median of the logged losses; the smoothed sequence is what
/// the non-increasing-loss checks look at.
inline std::vector<double> smoothed_losses(const std::vector<EpochLog>& logs,
                                           Index window = 5) {
  std::vector<double> out;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const std::size_t begin = i + 1 >= static_cast<std::size_t>(window)
                                  ? i + 1 - static_cast<std::size_t>(window)
                                  : 0;
    std::vector<double> vals;
    for (std::size_t j = begin; j <= i; ++j) vals.push_back(logs[j].loss);
    std::sort(vals.begin(), vals.end());
    out.push_back(vals[vals.size() / 2]);
  }
  return out;
}

}  // namespace densmat
