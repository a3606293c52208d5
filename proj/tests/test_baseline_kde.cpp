#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "densmat/baseline_kde.hpp"
#include "densmat/random.hpp"

using namespace densmat;

TEST_CASE("normalizing constant") {
  CHECK(normalizing_constant(std::numbers::pi, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(normalizing_constant(1.0, 1) ==
        doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-12));
  CHECK(normalizing_constant(4.0, 1) == doctest::Approx(0.8862269).epsilon(1e-6));
  CHECK_THROWS_AS(normalizing_constant(0.0, 1), std::invalid_argument);
}

TEST_CASE("kde on a single point") {
  Matrix train(1, 1);
  train << 0.4;
  KdeModel model = fit_kde(train, 1.0);
  Vector q(1);
  q << 0.4;
  CHECK(kde_density(model, q) ==
        doctest::Approx(1.0 / std::sqrt(std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("kde closed-form value") {
  Matrix train(1, 1);
  train << 0.0;
  KdeModel model = fit_kde(train, 1.0);
  Vector q(1);
  q << 1.0;
  // e^{-1} / sqrt(pi)
  CHECK(kde_density(model, q) == doctest::Approx(0.2075537).epsilon(1e-6));
}

TEST_CASE("kde symmetry over a reflected pair") {
  Matrix train(2, 1);
  train << -1.3, 1.3;
  KdeModel model = fit_kde(train, 0.8);
  Vector left(1), right(1);
  left << -0.4;
  right << 0.4;
  CHECK(kde_density(model, left) == doctest::Approx(kde_density(model, right)));
}

TEST_CASE("kde is exchangeable in its training points") {
  Rng rng(31);
  Matrix train(20, 2);
  for (Index i = 0; i < train.size(); ++i) train.data()[i] = rng.normal();
  Matrix shuffled = train.colwise().reverse();
  KdeModel a = fit_kde(train, 1.5);
  KdeModel b = fit_kde(shuffled, 1.5);
  Vector q(2);
  q << 0.2, -0.1;
  CHECK(kde_density(a, q) == doctest::Approx(kde_density(b, q)).epsilon(1e-14));
}

TEST_CASE("batched evaluation equals the scalar path") {
  Rng rng(32);
  Matrix train(5000, 2);
  for (Index i = 0; i < train.size(); ++i) train.data()[i] = rng.normal();
  KdeModel model = fit_kde(train, 2.0);
  Matrix queries(7, 2);
  for (Index i = 0; i < queries.size(); ++i) queries.data()[i] = rng.normal();
  Vector batch = kde_density_rows(model, queries);
  for (Index i = 0; i < queries.rows(); ++i) {
    CHECK(batch[i] ==
          doctest::Approx(kde_density(model, queries.row(i).transpose())).epsilon(1e-12));
  }
}

TEST_CASE("kde integrates to one on a padded 1-D grid") {
  Rng rng(33);
  Matrix train(400, 1);
  for (Index i = 0; i < train.rows(); ++i) train(i, 0) = rng.normal(1.0, 1.5);
  KdeModel model = fit_kde(train, 2.0);
  const Index n = 4000;
  const double lo = -8.0, hi = 10.0;
  Matrix grid(n, 1);
  for (Index i = 0; i < n; ++i) {
    grid(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  Vector dens = kde_density_rows(model, grid);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  double integral = 0.0;
  for (Index i = 0; i + 1 < n; ++i) integral += 0.5 * (dens[i] + dens[i + 1]) * step;
  CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
  CHECK(dens.minCoeff() >= 0.0);
}

TEST_CASE("linear RFF estimator matches its loop oracle") {
  Rng rng(34);
  Matrix train(60, 1);
  for (Index i = 0; i < train.rows(); ++i) train(i, 0) = rng.normal();
  const double gamma = 1.0;
  RffKdeModel model = fit_rff_linear_kde(train, gamma, 64, 9);

  Vector q(1);
  q << 0.3;
  Vector phi_q = apply_rff(model.rff, q);
  double oracle = 0.0;
  for (Index i = 0; i < train.rows(); ++i) {
    oracle += apply_rff(model.rff, train.row(i).transpose()).dot(phi_q);
  }
  oracle /= static_cast<double>(train.rows()) * model.norm_const;
  CHECK(rff_linear_kde(model, q) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("linear RFF estimator goes negative somewhere") {
  // The flaw the density-matrix construction fixes: at small D the linear
  // estimator dips below zero on some part of the grid for some seed.
  Rng rng(35);
  Matrix train(50, 1);
  for (Index i = 0; i < train.rows(); ++i) train(i, 0) = rng.normal();

  bool negative_seen = false;
  for (std::uint64_t seed = 0; seed < 100 && !negative_seen; ++seed) {
    RffKdeModel model = fit_rff_linear_kde(train, 1.0, 16, seed);
    for (double x = -6.0; x <= 6.0; x += 0.05) {
      Vector q(1);
      q << x;
      if (rff_linear_kde(model, q) < 0.0) {
        negative_seen = true;
        break;
      }
    }
  }
  CHECK(negative_seen);
}

TEST_CASE("linear RFF estimator tracks KDE inside a dense cluster") {
  Rng rng(36);
  Matrix train(500, 1);
  for (Index i = 0; i < train.rows(); ++i) train(i, 0) = rng.normal(0.0, 0.5);
  const double gamma = 1.0;
  KdeModel kde = fit_kde(train, gamma);
  RffKdeModel rff = fit_rff_linear_kde(train, gamma, 4096, 17);
  Vector q(1);
  q << 0.1;
  const double exact = kde_density(kde, q);
  const double approx = rff_linear_kde(rff, q);
  CHECK(approx > 0.0);
  CHECK(std::abs(approx - exact) < 0.05);
}
