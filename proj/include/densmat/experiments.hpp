#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "densmat/baseline_kde.hpp"
#include "densmat/datasets.hpp"
#include "densmat/dmkdc.hpp"
#include "densmat/qmr.hpp"

namespace densmat {

/// Worker-pool size: DENSMAT_THREADS if set, hardware concurrency otherwise.
inline Index worker_count(Index n_tasks) {
  Index threads = static_cast<Index>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DENSMAT_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) threads = static_cast<Index>(parsed);
  }
  if (threads < 1) threads = 1;
  return std::min(threads, std::max<Index>(n_tasks, 1));
}

/// Runs fn(i) for i in [0, n). Tasks own their output slots, so scheduling
/// order never changes results.
inline void parallel_for(Index n, const std::function<void(Index)>& fn) {
  const Index workers = worker_count(n);
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const Index i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline double rmse(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() >= 1, "rmse: length mismatch");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

inline Vector clamped_log(const Vector& v) {
  return v.cwiseMax(1e-300).array().log().matrix();
}

inline double median(std::vector<double> values) {
  require(!values.empty(), "median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// --------------------------------------------------------------------------
// Prediction-time benchmark (KDE vs DMKDE over growing training sets)
// --------------------------------------------------------------------------

struct TimingRow {
  std::string method;
  Index n_train = 0;
  Index rff_dim = 0;
  Index rank = 0;
  Index dim = 0;
  double median_seconds = 0.0;  // per query batch
  int runs = 0;
};

namespace bench_detail {

inline double median_batch_seconds(const std::function<void()>& run, int runs) {
  run();  // warm-up
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return median(times);
}

}  // namespace bench_detail

/// Wall-clock batch prediction times for KDE and DMKDE at each training size.
/// Median of `runs` timed passes after a warm-up, monotonic clock throughout.
inline std::vector<TimingRow> timing_sweep(const std::vector<Index>& train_sizes, Index d,
                                           double gamma, Index rff_dim, Index rank,
                                           Index n_queries, std::uint64_t seed,
                                           int runs = 5) {
  std::vector<TimingRow> rows;
  Rng qrng(derive_seed(seed, 0xbe));
  Matrix queries(n_queries, d);
  for (Index i = 0; i < n_queries; ++i) {
    for (Index j = 0; j < d; ++j) queries(i, j) = qrng.normal();
  }

  for (std::size_t si = 0; si < train_sizes.size(); ++si) {
    const Index n = train_sizes[si];
    Rng rng(derive_seed(seed, si));
    Matrix train(n, d);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) train(i, j) = rng.normal();
    }

    KdeModel kde = fit_kde(train, gamma);
    DmkdeModel dm = fit_estimation(train, gamma, rff_dim, rank, derive_seed(seed, 0xd0 + si));

    volatile double sink = 0.0;
    const double kde_time = bench_detail::median_batch_seconds(
        [&] { sink = kde_density_rows(kde, queries).sum(); }, runs);
    const double dm_time = bench_detail::median_batch_seconds(
        [&] { sink = density_rows(dm, queries).sum(); }, runs);
    (void)sink;

    rows.push_back({"kde", n, 0, 0, d, kde_time, runs});
    rows.push_back({"dmkde", n, rff_dim, rank, d, dm_time, runs});
  }
  return rows;
}

inline void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path,
                             const std::string& machine) {
  std::ofstream out(path);
  if (!out) throw DataError("write_timing_csv: cannot open '" + path + "'");
  out << "# machine=" << machine << '\n';
  out << "method,N,D,r,d,median_seconds,runs\n";
  for (const auto& row : rows) {
    out << row.method << ',' << row.n_train << ',' << row.rff_dim << ',' << row.rank
        << ',' << row.dim << ',' << detail::format_double(row.median_seconds) << ','
        << row.runs << '\n';
  }
}

// --------------------------------------------------------------------------
// RFF-dimension convergence study on the 1-D mixture
// --------------------------------------------------------------------------

struct ConvergenceRow {
  Index rff_dim = 0;
  int seeds = 0;
  double mean_rmse_vs_true = 0.0;
  double ci95_vs_true = 0.0;
  double mean_rmse_vs_kde = 0.0;
  double ci95_vs_kde = 0.0;
  double mean_kde_rmse_vs_true = 0.0;
};

struct ConvergenceConfig {
  Index n_train = 1000;
  double gamma = 8.0;
  Index rank = 30;
  double grid_lo = -5.0;
  double grid_hi = 10.0;
  Index grid_points = 1000;
  std::uint64_t seed = 0;
};

/// Per-(D, seed) RMSE of DMKDE against the true mixture pdf and against the
/// exact-KDE oracle on a shared grid.
struct ConvergenceSample {
  double rmse_vs_true = 0.0;
  double rmse_vs_kde = 0.0;
  double kde_rmse_vs_true = 0.0;
};

inline ConvergenceSample convergence_sample(Index rff_dim, std::uint64_t seed,
                                            const ConvergenceConfig& cfg) {
  Dataset data = gen_mixture_1d(cfg.n_train, derive_seed(seed, 0x11));
  Matrix grid(cfg.grid_points, 1);
  Vector truth(cfg.grid_points);
  for (Index i = 0; i < cfg.grid_points; ++i) {
    grid(i, 0) = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * static_cast<double>(i) /
                                   static_cast<double>(cfg.grid_points - 1);
    truth[i] = mixture_1d_pdf(grid(i, 0));
  }
  KdeModel kde = fit_kde(data.features, cfg.gamma);
  Vector kde_dens = kde_density_rows(kde, grid);
  const Index rank = std::min(cfg.rank, rff_dim);  // the sweep may go below r
  DmkdeModel dm = fit_estimation(data.features, cfg.gamma, rff_dim, rank,
                                 derive_seed(seed, 0x22));
  Vector dm_dens = density_rows(dm, grid);
  return {rmse(dm_dens, truth), rmse(dm_dens, kde_dens), rmse(kde_dens, truth)};
}

inline std::vector<ConvergenceRow> convergence_study(const std::vector<Index>& rff_dims,
                                                     int n_seeds,
                                                     const ConvergenceConfig& cfg) {
  std::vector<ConvergenceRow> rows;
  for (Index rff_dim : rff_dims) {
    std::vector<ConvergenceSample> samples(static_cast<std::size_t>(n_seeds));
    parallel_for(n_seeds, [&](Index s) {
      samples[static_cast<std::size_t>(s)] = convergence_sample(
          rff_dim, derive_seed(cfg.seed, static_cast<std::uint64_t>(s)), cfg);
    });

    auto stats = [&](auto get) {
      double mean = 0.0;
      for (const auto& s : samples) mean += get(s);
      mean /= static_cast<double>(n_seeds);
      double var = 0.0;
      for (const auto& s : samples) var += (get(s) - mean) * (get(s) - mean);
      var = n_seeds > 1 ? var / static_cast<double>(n_seeds - 1) : 0.0;
      const double ci = 1.96 * std::sqrt(var / static_cast<double>(n_seeds));
      return std::pair<double, double>{mean, ci};
    };
    const auto [mt, ct] = stats([](const ConvergenceSample& s) { return s.rmse_vs_true; });
    const auto [mk, ck] = stats([](const ConvergenceSample& s) { return s.rmse_vs_kde; });
    const auto [mkt, ckt] =
        stats([](const ConvergenceSample& s) { return s.kde_rmse_vs_true; });
    (void)ckt;
    rows.push_back({rff_dim, n_seeds, mt, ct, mk, ck, mkt});
  }
  return rows;
}

inline void write_convergence_csv(const std::vector<ConvergenceRow>& rows,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_convergence_csv: cannot open '" + path + "'");
  out << "D,seeds,mean_rmse_vs_true,ci95_vs_true,mean_rmse_vs_kde,ci95_vs_kde,"
         "mean_kde_rmse_vs_true\n";
  for (const auto& row : rows) {
    out << row.rff_dim << ',' << row.seeds << ','
        << detail::format_double(row.mean_rmse_vs_true) << ','
        << detail::format_double(row.ci95_vs_true) << ','
        << detail::format_double(row.mean_rmse_vs_kde) << ','
        << detail::format_double(row.ci95_vs_kde) << ','
        << detail::format_double(row.mean_kde_rmse_vs_true) << '\n';
  }
}

// --------------------------------------------------------------------------
// Random hyperparameter search with k-fold cross-validation
// --------------------------------------------------------------------------

enum class ModelKind { dmkde, dmkdc, qmc, qmr };

inline std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::dmkde: return "dmkde";
    case ModelKind::dmkdc: return "dmkdc";
    case ModelKind::qmc: return "qmc";
    case ModelKind::qmr: return "qmr";
  }
  return "?";
}

/// Median-heuristic kernel spread 1/(2 sigma^2) with sigma the inter-sample
/// median distance, estimated on at most max_pairs subsampled pairs.
inline double median_heuristic_gamma(const Matrix& features, std::uint64_t seed,
                                     Index max_pairs = 2000) {
  const Index n = features.rows();
  require(n >= 2, "median_heuristic_gamma: need at least two samples");
  Rng rng(seed);
  std::vector<double> dists;
  const Index pairs = std::min<Index>(max_pairs, n * (n - 1) / 2);
  dists.reserve(static_cast<std::size_t>(pairs));
  for (Index p = 0; p < pairs; ++p) {
    const Index i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    dists.push_back((features.row(i) - features.row(j)).norm());
  }
  const double sigma = std::max(median(dists), 1e-12);
  return 1.0 / (2.0 * sigma * sigma);
}

/// One sampled configuration and its cross-validated score.
struct SearchConfig {
  double gamma = 1.0;
  double rank_fraction = 1.0;  // of the RFF dimension
  double learning_rate = 1e-3;
  double beta = 4.0;  // QMR only
  double metric = 0.0;
};

struct SearchResult {
  std::vector<SearchConfig> evaluated;
  SearchConfig best;
  std::string metric_name;
  bool maximize = false;
};

struct SearchSettings {
  ModelKind kind = ModelKind::dmkdc;
  Index n_configs = 25;
  Index folds = 5;
  std::uint64_t seed = 0;
  Index rff_dim = 1024;
  Index landmarks = 8;       // QMR output landmarks
  Index sgd_epochs = 0;      // 0: estimation strategy
  Index batch_size = 64;
  double alpha_tradeoff = 0.5;
};

namespace search_detail {

inline std::vector<std::vector<Index>> make_folds(Index n, Index folds,
                                                  std::uint64_t seed) {
  std::vector<Index> order = shuffled_indices(n, seed);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
  for (Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i % folds)].push_back(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

struct FoldData {
  Matrix train_x;
  Vector train_y;
  Matrix test_x;
  Vector test_y;
};

inline FoldData split_fold(const Matrix& x, const Vector& y,
                           const std::vector<std::vector<Index>>& folds, Index hold_out) {
  FoldData fd;
  std::vector<Index> train_idx;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (static_cast<Index>(f) == hold_out) continue;
    train_idx.insert(train_idx.end(), folds[f].begin(), folds[f].end());
  }
  const auto& test_idx = folds[static_cast<std::size_t>(hold_out)];
  fd.train_x.resize(static_cast<Index>(train_idx.size()), x.cols());
  fd.train_y.resize(static_cast<Index>(train_idx.size()));
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    fd.train_x.row(static_cast<Index>(i)) = x.row(train_idx[i]);
    if (y.size() > 0) fd.train_y[static_cast<Index>(i)] = y[train_idx[i]];
  }
  fd.test_x.resize(static_cast<Index>(test_idx.size()), x.cols());
  fd.test_y.resize(static_cast<Index>(test_idx.size()));
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    fd.test_x.row(static_cast<Index>(i)) = x.row(test_idx[i]);
    if (y.size() > 0) fd.test_y[static_cast<Index>(i)] = y[test_idx[i]];
  }
  return fd;
}

}  // namespace search_detail

/// Random search over (gamma, rank fraction, learning rate[, beta]). gamma is
/// sampled log-uniformly over [2^-2, 2^6] octaves around the median
/// heuristic, rank from {0.1, 0.2, 0.5, 1} of the RFF dimension, the learning
/// rate log-uniformly inside (0, 0.001], beta uniformly in (0, 25).
/// Classification scores by fold-mean accuracy, QMR by MAE over the ordinal
/// classes, DMKDE by held-out mean log density.
inline SearchResult random_search(const Matrix& features, const Vector& labels,
                                  const SearchSettings& settings) {
  const Index n = features.rows();
  require(n >= settings.folds, "random_search: fewer samples than folds");
  require(settings.n_configs >= 1, "random_search: need at least one configuration");

  const bool needs_labels = settings.kind != ModelKind::dmkde;
  require(!needs_labels || labels.size() == n, "random_search: labels required");

  const double gamma_med =
      median_heuristic_gamma(features, derive_seed(settings.seed, 0x91));
  Rng rng(derive_seed(settings.seed, 0x92));
  const double rank_menu[4] = {0.1, 0.2, 0.5, 1.0};

  std::vector<SearchConfig> configs(static_cast<std::size_t>(settings.n_configs));
  for (auto& cfg : configs) {
    cfg.gamma = gamma_med * std::pow(2.0, rng.uniform(-2.0, 6.0));
    cfg.rank_fraction = rank_menu[rng.below(4)];
    cfg.learning_rate = 1e-3 * std::pow(10.0, rng.uniform(-2.0, 0.0));
    cfg.beta = std::max(1e-3, rng.uniform(0.0, 25.0));
  }

  auto folds = search_detail::make_folds(n, settings.folds,
                                         derive_seed(settings.seed, 0x93));

  SearchResult result;
  result.maximize = settings.kind == ModelKind::dmkdc || settings.kind == ModelKind::qmc ||
                    settings.kind == ModelKind::dmkde;
  result.metric_name = settings.kind == ModelKind::dmkde  ? "mean_log_density"
                       : settings.kind == ModelKind::qmr ? "mae"
                                                         : "accuracy";

  parallel_for(settings.n_configs, [&](Index ci) {
    SearchConfig& cfg = configs[static_cast<std::size_t>(ci)];
    const Index rank = std::max<Index>(
        1, static_cast<Index>(std::llround(cfg.rank_fraction * settings.rff_dim)));
    double score_sum = 0.0;
    for (Index f = 0; f < settings.folds; ++f) {
      auto fd = search_detail::split_fold(features, labels, folds, f);
      const std::uint64_t fit_seed = derive_seed(settings.seed, 0xa0 + ci * 31 + f);
      OptimizerConfig opt;
      opt.learning_rate = cfg.learning_rate;
      opt.epochs = settings.sgd_epochs;
      opt.batch_size = std::min<Index>(settings.batch_size, fd.train_x.rows());
      opt.seed = fit_seed;
      switch (settings.kind) {
        case ModelKind::dmkde: {
          DmkdeModel model =
              settings.sgd_epochs > 0
                  ? fit_sgd(fd.train_x, cfg.gamma, settings.rff_dim, rank, fit_seed, opt)
                  : fit_estimation(fd.train_x, cfg.gamma, settings.rff_dim, rank,
                                   fit_seed);
          score_sum += mean_log_density(model, fd.test_x);
          break;
        }
        case ModelKind::dmkdc: {
          DmkdcModel model =
              settings.sgd_epochs > 0
                  ? fit_sgd(fd.train_x, fd.train_y, cfg.gamma, settings.rff_dim, rank,
                            fit_seed, opt)
                  : fit_estimation(fd.train_x, fd.train_y, cfg.gamma, settings.rff_dim,
                                   rank, fit_seed);
          score_sum += accuracy(model, fd.test_x, fd.test_y);
          break;
        }
        case ModelKind::qmc: {
          auto input = QmcInputMap::make_rff(build_rff(
              fd.train_x.cols(), settings.rff_dim, cfg.gamma / 2.0, fit_seed));
          const Index k = static_cast<Index>(fd.train_y.maxCoeff());
          auto output = QmcOutputMap::make_one_hot(k);
          const Index joint_rank =
              std::min<Index>(rank * k, settings.rff_dim * k);
          QmcModel model =
              settings.sgd_epochs > 0
                  ? fit_sgd(fd.train_x, fd.train_y, input, output, joint_rank, opt)
                  : fit_estimation(fd.train_x, fd.train_y, input, output, joint_rank);
          score_sum += accuracy(model, fd.test_x, fd.test_y);
          break;
        }
        case ModelKind::qmr: {
          const Index classes = static_cast<Index>(labels.maxCoeff());
          const Index joint_rank = std::min<Index>(
              rank, settings.rff_dim * settings.landmarks);
          QmrModel model =
              settings.sgd_epochs > 0
                  ? fit_sgd(fd.train_x, fd.train_y, cfg.gamma, settings.rff_dim,
                            settings.landmarks, cfg.beta, joint_rank,
                            settings.alpha_tradeoff, fit_seed, opt)
                  : fit_estimation(fd.train_x, fd.train_y, cfg.gamma, settings.rff_dim,
                                   settings.landmarks, cfg.beta, joint_rank, fit_seed);
          Vector pred(fd.test_x.rows());
          for (Index i = 0; i < fd.test_x.rows(); ++i) {
            pred[i] = static_cast<double>(
                predict_class(model, fd.test_x.row(i).transpose(), classes));
          }
          score_sum += mae(pred, fd.test_y);
          break;
        }
      }
    }
    cfg.metric = score_sum / static_cast<double>(settings.folds);
  });

  result.evaluated = configs;
  result.best = configs[0];
  for (const auto& cfg : configs) {
    const bool better =
        result.maximize ? cfg.metric > result.best.metric : cfg.metric < result.best.metric;
    if (better) result.best = cfg;
  }
  return result;
}

}  // namespace densmat
