#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "densmat/training.hpp"

using namespace densmat;

TEST_CASE("adam leaves parameters alone under zero gradient") {
  Vector params(3);
  params << 1.0, -2.0, 0.5;
  Vector before = params;
  AdamState state;
  OptimizerConfig config;
  adam_step(params, Vector::Zero(3), state, config);
  CHECK((params - before).norm() == doctest::Approx(0.0));
}

TEST_CASE("adam first step has learning-rate magnitude") {
  Vector params(1);
  params << 0.0;
  AdamState state;
  OptimizerConfig config;
  config.learning_rate = 0.1;
  adam_step(params, Vector::Constant(1, 1.0), state, config);
  CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam matches a hand-rolled scalar reference over 100 steps") {
  OptimizerConfig config;
  config.learning_rate = 0.05;

  Vector params(1);
  params << 2.0;
  AdamState state;

  // Independent scalar re-implementation of the update rule.
  double ref = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * ref;  // gradient of ref^2
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(config.beta1, t));
    const double vhat = v / (1.0 - std::pow(config.beta2, t));
    ref -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);

    adam_step(params, Vector::Constant(1, 2.0 * params[0]), state, config);
    // Reference consumes its own gradient, so feed the same trajectory:
    CHECK(params[0] == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects NaN gradients") {
  Vector params(2);
  params << 0.0, 0.0;
  Vector grads(2);
  grads << 1.0, std::nan("");
  AdamState state;
  OptimizerConfig config;
  CHECK_THROWS_AS(adam_step(params, grads, state, config), NumericFailure);
}

TEST_CASE("finite differences confirm a quadratic gradient") {
  Vector params(5);
  params << 0.3, -1.1, 2.0, 0.0, -0.4;
  auto loss = [](const Vector& p) { return 0.5 * p.squaredNorm(); };
  auto reports = finite_diff_check(loss, params, params);
  CHECK(reports.size() == 5);
  for (const auto& r : reports) {
    CHECK(r.rel_error < 1e-8);
    CHECK_FALSE(r.flagged);
  }
}

TEST_CASE("finite differences flag a corrupted gradient") {
  Vector params(4);
  params << 1.0, 2.0, 3.0, 4.0;
  auto loss = [](const Vector& p) { return 0.5 * p.squaredNorm(); };
  Vector corrupted = params;
  corrupted[2] *= 1.10;  // +10% on one coordinate
  auto reports = finite_diff_check(loss, params, corrupted);
  CHECK(reports[2].flagged);
  CHECK_FALSE(reports[0].flagged);
}

TEST_CASE("finite differences reject a non-finite loss") {
  Vector params(1);
  params << 1.0;
  auto loss = [](const Vector& p) { return std::log(-p[0]); };
  CHECK_THROWS_AS(finite_diff_check(loss, params, params), NumericFailure);
}

TEST_CASE("finite differences subsample very large parameter vectors") {
  Vector params = Vector::Constant(5000, 0.5);
  auto loss = [](const Vector& p) { return 0.5 * p.squaredNorm(); };
  auto reports = finite_diff_check(loss, params, params, 1e-5, 200, 3);
  CHECK(reports.size() == 200);
}

TEST_CASE("run_sgd is deterministic and converges on a quadratic") {
  auto objective = [](const Vector& p, const std::vector<Index>& batch, Vector& grad) {
    grad = static_cast<double>(batch.size()) * p;
    return 0.5 * static_cast<double>(batch.size()) * p.squaredNorm();
  };

  OptimizerConfig config;
  config.epochs = 40;
  config.batch_size = 8;
  config.seed = 5;
  config.learning_rate = 0.05;

  Vector a = Vector::Constant(3, 1.0);
  auto logs_a = run_sgd(a, objective, 32, config);
  Vector b = Vector::Constant(3, 1.0);
  auto logs_b = run_sgd(b, objective, 32, config);
  CHECK((a - b).norm() == doctest::Approx(0.0));
  CHECK(a.norm() < 0.1);
  CHECK(logs_a.size() == 40);
  CHECK(logs_a.back().loss < logs_a.front().loss);

  auto smoothed = smoothed_losses(logs_a);
  for (std::size_t i = 1; i < smoothed.size(); ++i) {
    CHECK(smoothed[i] <= smoothed[i - 1] + 1e-12);
  }
}

TEST_CASE("run_sgd validates its configuration") {
  auto objective = [](const Vector& p, const std::vector<Index>&, Vector& grad) {
    grad = p;
    return 0.5 * p.squaredNorm();
  };
  Vector params = Vector::Ones(2);
  OptimizerConfig config;
  config.epochs = 1;
  config.batch_size = 64;
  CHECK_THROWS_AS(run_sgd(params, objective, 8, config), std::invalid_argument);
}

TEST_CASE("run_sgd reports the batch where the loss went NaN") {
  auto objective = [](const Vector& p, const std::vector<Index>&, Vector& grad) {
    grad = p;
    return std::nan("");
  };
  Vector params = Vector::Ones(2);
  OptimizerConfig config;
  config.epochs = 1;
  config.batch_size = 2;
  try {
    run_sgd(params, objective, 4, config);
    CHECK(false);
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("batch 0") != std::string::npos);
  }
}
