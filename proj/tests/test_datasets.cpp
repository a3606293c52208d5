#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "densmat/datasets.hpp"

using namespace densmat;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "densmat_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("mixture generator statistics and pdf") {
  Dataset data = gen_mixture_1d(10000, 42);
  CHECK(data.features.col(0).mean() == doctest::Approx(3.5).epsilon(0.03));

  const double expect =
      0.3 / std::sqrt(2.0 * std::numbers::pi) +
      0.7 * std::exp(-12.5) / std::sqrt(2.0 * std::numbers::pi);
  CHECK(mixture_1d_pdf(0.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(mixture_1d_pdf(0.0) == doctest::Approx(0.119682).epsilon(1e-4));

  Dataset again = gen_mixture_1d(10000, 42);
  CHECK(data.features == again.features);
}

TEST_CASE("spiral generator balance and determinism") {
  Dataset data = gen_spirals_2d(1000, 7);
  Index counts[3] = {0, 0, 0};
  for (Index i = 0; i < data.size(); ++i) {
    ++counts[static_cast<Index>((*data.labels)[i]) - 1];
  }
  CHECK(std::abs(counts[0] - counts[1]) <= 1);
  CHECK(std::abs(counts[1] - counts[2]) <= 1);

  Dataset again = gen_spirals_2d(1000, 7);
  CHECK(data.features == again.features);
}

TEST_CASE("noise-free spirals are invariant under arm rotation") {
  Dataset data = gen_spirals_2d(300, 3, 0.0);
  const double angle = 2.0 * std::numbers::pi / 3.0;
  Matrix rot(2, 2);
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  // Sample 3g+k of arm k rotates onto sample 3g+(k+1 mod 3) of the next arm.
  for (Index g = 0; g + 3 <= data.size(); g += 3) {
    for (Index arm = 0; arm < 3; ++arm) {
      Vector rotated = rot * data.features.row(g + arm).transpose();
      const Index target = g + (arm + 1) % 3;
      CHECK((rotated - data.features.row(target).transpose()).norm() < 1e-12);
    }
  }
}

TEST_CASE("csv round trip") {
  Dataset data = gen_spirals_2d(30, 5);
  auto path = temp_file("roundtrip.csv");
  write_csv(data, path.string());
  Dataset loaded = load_csv(path.string(), std::string("label"));
  CHECK(loaded.size() == 30);
  CHECK(loaded.dim() == 2);
  CHECK((loaded.features - data.features).norm() == doctest::Approx(0.0));
  CHECK((*loaded.labels - *data.labels).norm() == doctest::Approx(0.0));
}

TEST_CASE("csv small literal file and label by index") {
  auto path = temp_file("small.csv");
  std::ofstream(path) << "1.5,2,3\n4,5e-1,6\n-7,8,0.25\n";
  Dataset data = load_csv(path.string(), std::nullopt, false);
  CHECK(data.size() == 3);
  CHECK(data.dim() == 3);
  CHECK(data.features(1, 1) == 0.5);

  Dataset labeled = load_csv(path.string(), std::string("2"), false);
  CHECK(labeled.dim() == 2);
  CHECK((*labeled.labels)[0] == 3.0);
}

TEST_CASE("csv error handling") {
  CHECK_THROWS_AS(load_csv("/nonexistent/nowhere.csv"), DataError);

  auto ragged = temp_file("ragged.csv");
  std::ofstream(ragged) << "a,b\n1,2\n3,4,5\n";
  try {
    load_csv(ragged.string());
    CHECK(false);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  auto garbage = temp_file("garbage.csv");
  std::ofstream(garbage) << "a,b\n1,wat\n";
  CHECK_THROWS_AS(load_csv(garbage.string()), DataError);

  auto nans = temp_file("nans.csv");
  std::ofstream(nans) << "a,b\n1,2\nnan,4\n5,inf\n7,8\n";
  Dataset data = load_csv(nans.string());
  CHECK(data.size() == 2);
  CHECK(data.meta.rejected_rows == 2);
}

TEST_CASE("pca recovers a low-dimensional subspace") {
  Rng rng(8);
  Matrix basis(3, 10);
  for (Index i = 0; i < basis.size(); ++i) basis.data()[i] = rng.normal();
  Matrix coords(80, 3);
  for (Index i = 0; i < coords.size(); ++i) coords.data()[i] = rng.normal();
  Dataset data;
  data.features = coords * basis;

  auto [reduced, proj] = pca_reduce(data, 3);
  Matrix rebuilt = proj.reconstruct(reduced.features);
  CHECK((rebuilt - data.features).norm() < 1e-8);
}

TEST_CASE("pca with k = d preserves total variance") {
  Rng rng(9);
  Dataset data;
  data.features.resize(50, 6);
  for (Index i = 0; i < data.features.size(); ++i) data.features.data()[i] = rng.normal();

  auto [reduced, proj] = pca_reduce(data, 6);
  Matrix centered = data.features.rowwise() - data.features.colwise().mean();
  const double total_var = centered.cwiseAbs2().sum() / (data.size() - 1);
  CHECK(proj.explained_variance.sum() == doctest::Approx(total_var).epsilon(1e-9));
}

TEST_CASE("pca component variances match a covariance-eigenvalue oracle") {
  Rng rng(10);
  Dataset data;
  data.features.resize(50, 10);
  for (Index i = 0; i < data.features.size(); ++i) data.features.data()[i] = rng.normal();

  auto [reduced, proj] = pca_reduce(data, 10);
  for (Index k = 0; k < 10; ++k) {
    Vector col = reduced.features.col(k);
    const double var = (col.array() - col.mean()).square().sum() / (data.size() - 1);
    CHECK(var == doctest::Approx(proj.explained_variance[k]).epsilon(1e-8));
  }
  CHECK_THROWS_AS(pca_reduce(data, 11), std::invalid_argument);
}

TEST_CASE("minmax scaling and inversion") {
  Dataset data;
  data.features.resize(2, 2);
  data.features << 2.0, 5.0, 4.0, 5.0;  // second column constant
  Index constant = 0;
  Dataset scaled = minmax_scale(data, &constant);
  CHECK(constant == 1);
  CHECK(scaled.features(0, 0) == 0.0);
  CHECK(scaled.features(1, 0) == 1.0);
  CHECK(scaled.features(0, 1) == 0.0);
  CHECK(scaled.features(1, 1) == 0.0);

  Matrix inverted = scaled.meta.scaler->invert(scaled.features);
  CHECK((inverted.col(0) - data.features.col(0)).norm() < 1e-12);
}

TEST_CASE("stratified split keeps class balance and is seeded") {
  Dataset data = gen_spirals_2d(300, 11);
  auto [train, test] = split(data, 0.8, true, 99);
  CHECK(train.size() + test.size() == 300);
  Index train_counts[3] = {0, 0, 0};
  for (Index i = 0; i < train.size(); ++i) {
    ++train_counts[static_cast<Index>((*train.labels)[i]) - 1];
  }
  for (Index c = 0; c < 3; ++c) CHECK(std::abs(train_counts[c] - 80) <= 1);

  auto [train2, test2] = split(data, 0.8, true, 99);
  CHECK(train.features == train2.features);
  auto [train3, test3] = split(data, 0.8, true, 100);
  CHECK(train.features != train3.features);
}
