#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "densmat/density_ops.hpp"
#include "densmat/random.hpp"

using namespace densmat;

namespace {

Matrix random_unit_rows(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix rows(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) rows(i, j) = rng.normal();
    rows.row(i) /= rows.row(i).norm();
  }
  return rows;
}

DenseDensityMatrix random_density(Index d, Index mix, std::uint64_t seed) {
  Matrix rows = random_unit_rows(mix, d, seed);
  return estimate_density_matrix(rows);
}

// The paper's worked two-state examples.
Vector psi1() {
  Vector v(2);
  v << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
  return v;
}

DenseDensityMatrix rho1() {
  Matrix m(2, 2);
  m << 0.5, -0.5, -0.5, 0.5;
  return DenseDensityMatrix{m};
}

DenseDensityMatrix rho2() {
  Matrix m(2, 2);
  m << 0.5, 0.0, 0.0, 0.5;
  return DenseDensityMatrix{m};
}

// Explicit dense collapse: pi rho pi / tr, then partial trace over X.
Matrix dense_collapse_oracle(const Matrix& joint_dense, Index dx, Index dy,
                             const Vector& zx, double* evidence) {
  Matrix projector = Matrix::Zero(dx * dy, dx * dy);
  Matrix zz = zx * zx.transpose();
  for (Index a = 0; a < dx; ++a) {
    for (Index a2 = 0; a2 < dx; ++a2) {
      for (Index b = 0; b < dy; ++b) {
        projector(a * dy + b, a2 * dy + b) = zz(a, a2);
      }
    }
  }
  Matrix collapsed = projector * joint_dense * projector;
  *evidence = collapsed.trace();
  collapsed /= *evidence;
  Matrix rho_y = Matrix::Zero(dy, dy);
  for (Index b = 0; b < dy; ++b) {
    for (Index b2 = 0; b2 < dy; ++b2) {
      for (Index a = 0; a < dx; ++a) rho_y(b, b2) += collapsed(a * dy + b, a * dy + b2);
    }
  }
  return rho_y;
}

}  // namespace

TEST_CASE("estimation from single and mixed states") {
  Matrix single(1, 2);
  single << 1.0, 0.0;
  Matrix expect(2, 2);
  expect << 1, 0, 0, 0;
  CHECK((estimate_density_matrix(single).entries - expect).norm() < 1e-15);

  Matrix pair(2, 2);
  pair << 1, 0, 0, 1;
  CHECK((estimate_density_matrix(pair).entries - rho2().entries).norm() < 1e-15);

  Matrix superposition(1, 2);
  superposition << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
  CHECK((estimate_density_matrix(superposition).entries - rho1().entries).norm() < 1e-15);
}

TEST_CASE("estimation validates its inputs") {
  CHECK_THROWS_AS(estimate_density_matrix(Matrix(0, 4)), std::invalid_argument);
  Matrix bad(1, 2);
  bad << 2.0, 0.0;  // not unit norm
  CHECK_THROWS_AS(estimate_density_matrix(bad), std::invalid_argument);
}

TEST_CASE("estimation preserves trace") {
  Matrix rows = random_unit_rows(200, 16, 4);
  CHECK(estimate_density_matrix(rows).trace() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sharded accumulation merges to the single-pass result") {
  Matrix rows = random_unit_rows(300, 12, 9);
  DensityAccumulator whole(12);
  whole.add_rows(rows);

  DensityAccumulator a(12), b(12), c(12);
  a.add_rows(rows.topRows(100));
  b.add_rows(rows.middleRows(100, 123));
  c.add_rows(rows.bottomRows(77));
  b.merge(c);
  a.merge(b);

  CHECK(a.count() == 300);
  CHECK((a.finalize().entries - whole.finalize().entries).norm() < 1e-14);
}

TEST_CASE("factorize recovers pure and diagonal states") {
  FactorizedDensityMatrix f1 = factorize(rho1(), 1);
  CHECK(f1.lambda[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(f1.v.row(0).dot(psi1())) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix diag(2, 2);
  diag << 0.7, 0.0, 0.0, 0.3;
  FactorizedDensityMatrix f2 = factorize(DenseDensityMatrix{diag}, 2);
  CHECK(f2.lambda[0] == doctest::Approx(0.7));
  CHECK(f2.lambda[1] == doctest::Approx(0.3));
  CHECK(std::abs(f2.v(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(f2.v(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full-rank factorization reconstructs the input") {
  DenseDensityMatrix rho = random_density(8, 20, 5);
  FactorizedDensityMatrix f = factorize(rho, 8);
  CHECK((f.reconstruct() - rho.entries).norm() < 1e-8);

  // Rows orthonormal when produced by eigendecomposition.
  Matrix gram = f.v * f.v.transpose();
  CHECK((gram - Matrix::Identity(8, 8)).norm() < 1e-8);
}

TEST_CASE("factorize validates rank and supports renormalization") {
  DenseDensityMatrix rho = random_density(6, 12, 6);
  CHECK_THROWS_AS(factorize(rho, 7), std::invalid_argument);
  CHECK_THROWS_AS(factorize(rho, 0), std::invalid_argument);

  FactorizedDensityMatrix truncated = factorize(rho, 2);
  CHECK(truncated.lambda.sum() < 1.0 + 1e-9);
  FactorizedDensityMatrix renorm = factorize(rho, 2, true);
  CHECK(renorm.lambda.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("born probabilities on the worked examples") {
  Vector phi = psi1();
  CHECK(born_probability(rho1(), phi) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(born_probability(rho2(), phi) == doctest::Approx(0.5).epsilon(1e-12));

  FactorizedDensityMatrix f1 = factorize(rho1(), 2);
  CHECK(born_probability(f1, phi) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("factorized and dense born values agree") {
  DenseDensityMatrix rho = random_density(16, 40, 7);
  FactorizedDensityMatrix f = factorize(rho, 16);
  Matrix queries = random_unit_rows(100, 16, 8);
  for (Index i = 0; i < queries.rows(); ++i) {
    Vector phi = queries.row(i).transpose();
    CHECK(std::abs(born_probability(f, phi) - born_probability(rho, phi)) < 1e-10);
  }
}

TEST_CASE("born_probability validates its inputs") {
  DenseDensityMatrix rho = rho1();
  Vector bad(3);
  bad << 1, 0, 0;
  CHECK_THROWS_AS(born_probability(rho, bad), std::invalid_argument);
  Vector not_unit(2);
  not_unit << 2, 0;
  CHECK_THROWS_AS(born_probability(rho, not_unit), std::invalid_argument);
}

TEST_CASE("born probability is linear in rho") {
  DenseDensityMatrix a = random_density(6, 9, 10);
  DenseDensityMatrix b = random_density(6, 4, 11);
  Vector phi = random_unit_rows(1, 6, 12).row(0).transpose();
  for (double w : {0.0, 0.25, 1.0}) {
    DenseDensityMatrix mix{w * a.entries + (1.0 - w) * b.entries};
    const double expect =
        w * born_probability(a, phi) + (1.0 - w) * born_probability(b, phi);
    CHECK(std::abs(born_probability(mix, phi) - expect) < 1e-10);
  }
}

TEST_CASE("born probabilities over an orthonormal basis sum to the trace") {
  DenseDensityMatrix rho = random_density(10, 25, 13);
  FactorizedDensityMatrix f = factorize(rho, 10);
  double total = 0.0;
  for (Index i = 0; i < 10; ++i) {
    total += born_probability(f, Vector(Vector::Unit(10, i)));
  }
  CHECK(total == doctest::Approx(rho.trace()).epsilon(1e-9));
}

TEST_CASE("tensor_embed layout, norms and elementwise oracle") {
  Vector ex(2), ey(2);
  ex << 1, 0;
  ey << 0, 1;
  Vector expect(4);
  expect << 0, 1, 0, 0;
  CHECK((tensor_embed(ex, ey) - expect).norm() == doctest::Approx(0.0));

  Vector zx = random_unit_rows(1, 3, 14).row(0).transpose();
  Vector zy = random_unit_rows(1, 2, 15).row(0).transpose();
  Vector joint = tensor_embed(zx, zy);
  CHECK(joint.norm() == doctest::Approx(1.0).epsilon(1e-12));
  for (Index a = 0; a < 3; ++a) {
    for (Index b = 0; b < 2; ++b) {
      CHECK(joint[a * 2 + b] == doctest::Approx(zx[a] * zy[b]).epsilon(1e-15));
    }
  }
}

TEST_CASE("collapse of a pure product state") {
  Vector zx = random_unit_rows(1, 3, 16).row(0).transpose();
  Vector zy = random_unit_rows(1, 2, 17).row(0).transpose();
  Matrix row(1, 6);
  row.row(0) = tensor_embed(zx, zy).transpose();
  FactorizedDensityMatrix joint = factorize(estimate_density_matrix(row), 6);

  ConditionalState state = measure_and_collapse(joint, 3, 2, zx);
  CHECK(state.evidence == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((state.rho_y.entries - zy * zy.transpose()).norm() < 1e-9);
}

TEST_CASE("collapse onto an orthogonal state has no support") {
  // Axis-aligned states keep the orthogonality exact in floating point.
  Vector zx = Vector::Unit(3, 0);
  Vector zy = random_unit_rows(1, 2, 17).row(0).transpose();
  Matrix row(1, 6);
  row.row(0) = tensor_embed(zx, zy).transpose();
  FactorizedDensityMatrix joint = factorize(estimate_density_matrix(row), 6);

  CHECK_THROWS_AS(measure_and_collapse(joint, 3, 2, Vector(Vector::Unit(3, 1))),
                  ZeroEvidence);
}

TEST_CASE("collapse shortcut matches the explicit dense oracle") {
  Matrix rows = random_unit_rows(3, 4, 18);  // rank-3 state over Dx=2, Dy=2
  Vector weights(3);
  weights << 0.5, 0.3, 0.2;
  FactorizedDensityMatrix joint;
  joint.v = rows;
  joint.lambda = weights;
  Matrix dense = joint.reconstruct();

  Vector zx = random_unit_rows(1, 2, 19).row(0).transpose();
  double oracle_evidence = 0.0;
  Matrix oracle = dense_collapse_oracle(dense, 2, 2, zx, &oracle_evidence);

  ConditionalState state = measure_and_collapse(joint, 2, 2, zx);
  CHECK((state.rho_y.entries - oracle).norm() < 1e-10);
  CHECK(state.evidence == doctest::Approx(oracle_evidence).epsilon(1e-10));

  // Output is a valid density matrix.
  CHECK(state.rho_y.trace() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((state.rho_y.entries - state.rho_y.entries.transpose()).norm() < 1e-12);
  SymmetricEig eig = spectral_decompose(state.rho_y.entries);
  CHECK(eig.values.minCoeff() > -1e-8);
}

TEST_CASE("evidence scales with lambda while rho_y does not") {
  Matrix rows = random_unit_rows(4, 6, 20);
  Vector weights(4);
  weights << 0.4, 0.3, 0.2, 0.1;
  FactorizedDensityMatrix joint{rows, weights};
  Vector zx = random_unit_rows(1, 3, 21).row(0).transpose();

  ConditionalState base = measure_and_collapse(joint, 3, 2, zx);
  FactorizedDensityMatrix scaled{rows, 0.25 * weights};
  ConditionalState quarter = measure_and_collapse(scaled, 3, 2, zx);
  CHECK(quarter.evidence == doctest::Approx(0.25 * base.evidence).epsilon(1e-12));
  CHECK((quarter.rho_y.entries - base.rho_y.entries).norm() < 1e-12);
}

TEST_CASE("gram and dense factorization routes agree") {
  for (auto [n, d] : {std::pair<Index, Index>{12, 24}, {40, 10}}) {
    Matrix rows = random_unit_rows(n, d, 22 + n);
    Vector weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
    const Index r = std::min(n, d);
    FactorizedDensityMatrix via_gram = factorize_gram(rows, weights, r);
    FactorizedDensityMatrix via_dense = factorize(estimate_density_matrix(rows), r);
    CHECK((via_gram.reconstruct() - via_dense.reconstruct()).norm() < 1e-10);

    // Gram-route rows are orthonormal too.
    Matrix gram = via_gram.v * via_gram.v.transpose();
    CHECK((gram - Matrix::Identity(via_gram.rank(), via_gram.rank())).norm() < 1e-8);
  }
}

TEST_CASE("duplicating the data leaves the estimate unchanged") {
  Matrix rows = random_unit_rows(7, 5, 30);
  Matrix doubled(14, 5);
  doubled << rows, rows;
  CHECK((estimate_density_matrix(rows).entries -
         estimate_density_matrix(doubled).entries)
            .norm() < 1e-12);
}

TEST_CASE("eigensolver failure reporting") {
  Matrix nan_matrix = Matrix::Constant(3, 3, std::nan(""));
  CHECK_THROWS_AS(spectral_decompose(nan_matrix), NumericFailure);
}
