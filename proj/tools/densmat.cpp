// densmat: density estimation, classification and ordinal regression built
// from random Fourier features and density matrices, plus an exact-KDE
// baseline and a small experiment harness.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "densmat/experiments.hpp"
#include "densmat/serialize.hpp"

namespace {

using namespace densmat;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFitFlags {
  std::string data_path;
  std::string label_column;
  bool no_header = false;
  std::string out_path;
  double gamma = 1.0;
  Index rff_dim = 1024;
  Index rank = 0;  // 0: default per model
  std::uint64_t seed = 0;
  Index epochs = 20;
  double learning_rate = 1e-3;
  Index batch_size = 64;
  Index landmarks = 8;
  double beta = 4.0;
  double alpha_tradeoff = 0.5;
  Index ordinal_bins = 0;
  std::string train_log;
};

Dataset load_dataset(const std::string& path, const std::string& label_column,
                     bool no_header) {
  std::optional<std::string> label;
  if (!label_column.empty()) label = label_column;
  Dataset data = load_csv(path, label, !no_header);
  if (data.meta.rejected_rows > 0) {
    std::cerr << "note: rejected " << data.meta.rejected_rows
              << " rows with non-finite values\n";
  }
  return data;
}

void write_train_log(const std::vector<EpochLog>& logs, const std::string& path) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open train log '" + path + "'");
  for (const auto& entry : logs) {
    Json row{{"epoch", entry.epoch}, {"loss", entry.loss},
             {"wall_seconds", entry.wall_seconds}};
    out << row.dump() << '\n';
  }
}

Json flags_to_json(const CommonFitFlags& flags, const std::string& model,
                   const std::string& strategy) {
  return Json{{"model", model},
              {"strategy", strategy},
              {"data", flags.data_path},
              {"gamma", flags.gamma},
              {"rff_dim", flags.rff_dim},
              {"rank", flags.rank},
              {"seed", flags.seed},
              {"epochs", flags.epochs},
              {"lr", flags.learning_rate},
              {"batch", flags.batch_size},
              {"landmarks", flags.landmarks},
              {"beta", flags.beta},
              {"alpha", flags.alpha_tradeoff},
              {"ordinal_bins", flags.ordinal_bins}};
}

int cmd_synth(const std::string& kind, Index n, std::uint64_t seed,
              const std::string& out) {
  Dataset data;
  if (kind == "mixture1d") {
    data = gen_mixture_1d(n, seed);
  } else if (kind == "spirals") {
    data = gen_spirals_2d(n, seed);
  } else {
    throw CLI::ValidationError("--kind", "unknown dataset kind '" + kind + "'");
  }
  write_csv(data, out);
  std::cout << "wrote " << data.size() << " rows to " << out << "\n";
  return 0;
}

int cmd_fit(const std::string& model_kind, const std::string& strategy,
            CommonFitFlags& flags) {
  const bool sgd = strategy == "sgd";
  Dataset data = load_dataset(flags.data_path, flags.label_column, flags.no_header);

  OptimizerConfig opt;
  opt.learning_rate = flags.learning_rate;
  opt.epochs = sgd ? flags.epochs : 0;
  opt.batch_size = flags.batch_size;
  opt.seed = derive_seed(flags.seed, 0x7a);

  std::vector<EpochLog> logs;
  Json model_json;
  const auto t0 = std::chrono::steady_clock::now();
  Index rank = flags.rank;

  if (model_kind == "dmkde") {
    if (rank == 0) rank = std::min<Index>(flags.rff_dim, 128);
    DmkdeModel model =
        sgd ? fit_sgd(data.features, flags.gamma, flags.rff_dim, rank, flags.seed, opt,
                      &logs)
            : fit_estimation(data.features, flags.gamma, flags.rff_dim, rank, flags.seed);
    model_json = to_json(model);
  } else if (model_kind == "dmkdc") {
    require(data.labels.has_value(), "fit dmkdc: data has no label column");
    if (rank == 0) rank = std::min<Index>(flags.rff_dim, 128);
    DmkdcModel model =
        sgd ? fit_sgd(data.features, *data.labels, flags.gamma, flags.rff_dim, rank,
                      flags.seed, opt, &logs)
            : fit_estimation(data.features, *data.labels, flags.gamma, flags.rff_dim,
                             rank, flags.seed);
    model_json = to_json(model);
  } else if (model_kind == "qmc") {
    require(data.labels.has_value(), "fit qmc: data has no label column");
    const Index k = static_cast<Index>(data.labels->maxCoeff());
    auto input = QmcInputMap::make_rff(
        build_rff(data.dim(), flags.rff_dim, flags.gamma / 2.0, flags.seed));
    auto output = QmcOutputMap::make_one_hot(k);
    if (rank == 0) rank = qmc_default_rank(data.size(), flags.rff_dim * k);
    QmcModel model = sgd ? fit_sgd(data.features, *data.labels, input, output, rank, opt,
                                   &logs)
                         : fit_estimation(data.features, *data.labels, input, output,
                                          rank);
    model_json = to_json(model);
  } else if (model_kind == "qmr") {
    require(data.labels.has_value(), "fit qmr: data has no target column");
    Vector targets = *data.labels;
    if (flags.ordinal_bins > 0) targets = ordinal_bin(targets, flags.ordinal_bins).labels;
    if (rank == 0) rank = qmc_default_rank(data.size(), flags.rff_dim * flags.landmarks);
    QmrModel model =
        sgd ? fit_sgd(data.features, targets, flags.gamma, flags.rff_dim, flags.landmarks,
                      flags.beta, rank, flags.alpha_tradeoff, flags.seed, opt, &logs)
            : fit_estimation(data.features, targets, flags.gamma, flags.rff_dim,
                             flags.landmarks, flags.beta, rank, flags.seed);
    model_json = to_json(model);
  } else {
    throw CLI::ValidationError("--model", "unknown model '" + model_kind + "'");
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_json(model_json, flags.out_path);
  write_train_log(logs, flags.train_log);
  std::cout << model_kind << "/" << strategy << ": N=" << data.size()
            << " D=" << flags.rff_dim << " r=" << rank << " train_seconds=" << seconds
            << " -> " << flags.out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& label_column, bool no_header, Index classes,
                const std::string& out_path) {
  Dataset data = load_dataset(data_path, label_column, no_header);
  AnyModel any = load_any_model(model_path);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open '" + out_path + "' for writing");

  if (std::holds_alternative<DmkdeModel>(any)) {
    const auto& model = std::get<DmkdeModel>(any);
    Vector dens = density_rows(model, data.features);
    out << "density\n";
    for (Index i = 0; i < dens.size(); ++i) out << detail::format_double(dens[i]) << '\n';
  } else if (std::holds_alternative<DmkdcModel>(any)) {
    const auto& model = std::get<DmkdcModel>(any);
    out << "label";
    for (Index c = 1; c <= model.num_classes(); ++c) out << ",p" << c;
    out << '\n';
    for (Index i = 0; i < data.size(); ++i) {
      Vector post = posterior(model, data.features.row(i).transpose());
      out << classify(model, data.features.row(i).transpose());
      for (Index c = 0; c < post.size(); ++c) out << ',' << detail::format_double(post[c]);
      out << '\n';
    }
  } else if (std::holds_alternative<QmcModel>(any)) {
    const auto& model = std::get<QmcModel>(any);
    out << "label";
    for (Index c = 1; c <= model.dim_y(); ++c) out << ",p" << c;
    out << '\n';
    for (Index i = 0; i < data.size(); ++i) {
      auto pred = predict_distribution(model, data.features.row(i).transpose());
      out << classify(model, data.features.row(i).transpose());
      for (Index c = 0; c < pred.diag.size(); ++c) {
        out << ',' << detail::format_double(pred.diag[c]);
      }
      out << '\n';
    }
  } else {
    const auto& model = std::get<QmrModel>(any);
    out << "y_hat,variance";
    if (classes >= 2) out << ",class";
    out << '\n';
    for (Index i = 0; i < data.size(); ++i) {
      auto pred = predict(model, data.features.row(i).transpose());
      out << detail::format_double(pred.y_hat) << ','
          << detail::format_double(pred.variance);
      if (classes >= 2) out << ',' << nearest_class(pred.y_hat_unit, classes);
      out << '\n';
    }
  }
  std::cout << "wrote predictions for " << data.size() << " rows to " << out_path << "\n";
  return 0;
}

struct EvalFlags {
  std::string task;
  std::string model_path;
  std::string data_path;
  std::string label_column;
  bool no_header = false;
  std::string grid;  // lo:hi:n for density tasks on a 1-D grid
  std::string ref;   // mixture1d | kde | model
  double ref_gamma = 0.0;
  std::string ref_train;
  std::string ref_model;
  bool log_space = false;
  Index classes = 5;
  std::string out_path;
};

Matrix parse_grid(const std::string& spec) {
  double lo = 0.0, hi = 0.0;
  long n = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%ld", &lo, &hi, &n) != 3 || n < 2 || hi <= lo) {
    throw CLI::ValidationError("--grid", "expected lo:hi:n with n >= 2");
  }
  Matrix grid(n, 1);
  for (long i = 0; i < n; ++i) {
    grid(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return grid;
}

int cmd_eval(const EvalFlags& flags) {
  Json metric;
  Json config{{"task", flags.task},       {"model", flags.model_path},
              {"data", flags.data_path},  {"grid", flags.grid},
              {"ref", flags.ref},         {"ref_gamma", flags.ref_gamma},
              {"log_space", flags.log_space}, {"classes", flags.classes}};

  if (flags.task == "density-rmse" || flags.task == "loglik") {
    AnyModel any = load_any_model(flags.model_path);
    if (!std::holds_alternative<DmkdeModel>(any)) {
      throw std::invalid_argument("eval: task '" + flags.task + "' needs a dmkde model");
    }
    const auto& model = std::get<DmkdeModel>(any);

    Matrix points;
    if (!flags.grid.empty()) {
      points = parse_grid(flags.grid);
      require(model.dim_in == 1, "eval: --grid only supports 1-D models");
    } else {
      require(!flags.data_path.empty(), "eval: need --data or --grid");
      points = load_dataset(flags.data_path, flags.label_column, flags.no_header).features;
    }

    if (flags.task == "loglik") {
      metric = Json{{"name", "mean_log_density"},
                    {"value", mean_log_density(model, points)}};
    } else {
      Vector predicted = density_rows(model, points);
      Vector reference;
      if (flags.ref == "mixture1d") {
        require(points.cols() == 1, "eval: mixture1d reference is 1-D");
        reference.resize(points.rows());
        for (Index i = 0; i < points.rows(); ++i) {
          reference[i] = mixture_1d_pdf(points(i, 0));
        }
      } else if (flags.ref == "kde") {
        require(!flags.ref_train.empty(), "eval: --ref kde needs --ref-train");
        require(flags.ref_gamma > 0.0, "eval: --ref kde needs --ref-gamma");
        Dataset train = load_dataset(flags.ref_train, "", flags.no_header);
        reference = kde_density_rows(fit_kde(train.features, flags.ref_gamma), points);
      } else if (flags.ref == "model") {
        require(!flags.ref_model.empty(), "eval: --ref model needs --ref-model");
        AnyModel ref_any = load_any_model(flags.ref_model);
        require(std::holds_alternative<DmkdeModel>(ref_any),
                "eval: reference model must be dmkde");
        reference = density_rows(std::get<DmkdeModel>(ref_any), points);
      } else {
        throw CLI::ValidationError("--ref", "expected mixture1d, kde or model");
      }
      const double value = flags.log_space
                               ? rmse(clamped_log(predicted), clamped_log(reference))
                               : rmse(predicted, reference);
      metric = Json{{"name", flags.log_space ? "log_density_rmse" : "density_rmse"},
                    {"value", value}};
    }
  } else if (flags.task == "accuracy") {
    Dataset data = load_dataset(flags.data_path, flags.label_column, flags.no_header);
    require(data.labels.has_value(), "eval accuracy: data has no label column");
    AnyModel any = load_any_model(flags.model_path);
    double value = 0.0;
    if (std::holds_alternative<DmkdcModel>(any)) {
      value = accuracy(std::get<DmkdcModel>(any), data.features, *data.labels);
    } else if (std::holds_alternative<QmcModel>(any)) {
      value = accuracy(std::get<QmcModel>(any), data.features, *data.labels);
    } else {
      throw std::invalid_argument("eval accuracy: needs a dmkdc or qmc model");
    }
    metric = Json{{"name", "accuracy"}, {"value", value}};
  } else if (flags.task == "mae") {
    Dataset data = load_dataset(flags.data_path, flags.label_column, flags.no_header);
    require(data.labels.has_value(), "eval mae: data has no label column");
    AnyModel any = load_any_model(flags.model_path);
    require(std::holds_alternative<QmrModel>(any), "eval mae: needs a qmr model");
    const auto& model = std::get<QmrModel>(any);
    Vector pred(data.size());
    for (Index i = 0; i < data.size(); ++i) {
      pred[i] = static_cast<double>(
          predict_class(model, data.features.row(i).transpose(), flags.classes));
    }
    metric = Json{{"name", "mae"}, {"value", mae(pred, *data.labels)}};
  } else {
    throw CLI::ValidationError("--task",
                               "expected density-rmse, accuracy, mae or loglik");
  }

  Json out{{"schema", "densmat/eval/v1"}, {"config", config}, {"metric", metric}};
  if (!flags.out_path.empty()) save_json(out, flags.out_path);
  std::cout << out.dump(2) << "\n";
  return 0;
}

std::string machine_descriptor() {
  std::string out = "unknown";
#if defined(__linux__)
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) out = line.substr(colon + 2);
      break;
    }
  }
#endif
  return out;
}

std::vector<Index> parse_index_list(const std::string& csv, const char* flag) {
  std::vector<Index> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma - start);
    try {
      out.push_back(static_cast<Index>(std::stoll(tok)));
    } catch (...) {
      throw CLI::ValidationError(flag, "bad integer list '" + csv + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int dispatch(int argc, char** argv) {
  CLI::App app{
      "density estimation, classification and ordinal regression with density "
      "matrices and random Fourier features"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  std::string synth_kind = "mixture1d";
  Index synth_n = 1000;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--kind", synth_kind, "mixture1d or spirals");
  synth->add_option("--n", synth_n, "number of samples");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path")->required();

  // fit --------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "train a model and write its JSON");
  std::string fit_model = "dmkde";
  std::string fit_strategy = "estimate";
  CommonFitFlags ff;
  fit->add_option("--model", fit_model, "dmkde, dmkdc, qmc or qmr")->required();
  fit->add_option("--strategy", fit_strategy, "estimate or sgd")
      ->check(CLI::IsMember({"estimate", "sgd"}));
  fit->add_option("--data", ff.data_path, "training CSV")->required();
  fit->add_option("--label-col", ff.label_column, "label column (name or 0-based index)");
  fit->add_flag("--no-header", ff.no_header, "CSV has no header row");
  fit->add_option("--gamma", ff.gamma, "target kernel spread")->required();
  fit->add_option("--rff-dim", ff.rff_dim, "random Fourier feature dimension D");
  fit->add_option("--rank", ff.rank, "factorization rank r (0: model default)");
  fit->add_option("--seed", ff.seed, "seed for all randomness");
  fit->add_option("--epochs", ff.epochs, "SGD epochs");
  fit->add_option("--lr", ff.learning_rate, "SGD learning rate");
  fit->add_option("--batch", ff.batch_size, "SGD batch size");
  fit->add_option("--landmarks", ff.landmarks, "QMR output landmarks");
  fit->add_option("--beta", ff.beta, "QMR softmax shape");
  fit->add_option("--alpha", ff.alpha_tradeoff, "QMR error/variance trade-off");
  fit->add_option("--ordinal-bins", ff.ordinal_bins,
                  "discretize QMR targets into this many equal-width bins");
  fit->add_option("--train-log", ff.train_log, "JSON-lines epoch log path");
  fit->add_option("--out", ff.out_path, "model JSON path")->required();

  // predict ------------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "apply a model to a CSV");
  std::string pr_model, pr_data, pr_label, pr_out;
  bool pr_no_header = false;
  Index pr_classes = 0;
  predict->add_option("--model-file", pr_model, "model JSON")->required();
  predict->add_option("--data", pr_data, "input CSV")->required();
  predict->add_option("--label-col", pr_label, "label column to drop from features");
  predict->add_flag("--no-header", pr_no_header, "CSV has no header row");
  predict->add_option("--classes", pr_classes, "QMR: also emit the nearest ordinal class");
  predict->add_option("--out", pr_out, "output CSV path")->required();

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "compute a metric for a trained model");
  EvalFlags ef;
  eval->add_option("--task", ef.task, "density-rmse, accuracy, mae or loglik")
      ->required();
  eval->add_option("--model-file", ef.model_path, "model JSON")->required();
  eval->add_option("--data", ef.data_path, "evaluation CSV");
  eval->add_option("--label-col", ef.label_column, "label column");
  eval->add_flag("--no-header", ef.no_header, "CSV has no header row");
  eval->add_option("--grid", ef.grid, "lo:hi:n evaluation grid (1-D density tasks)");
  eval->add_option("--ref", ef.ref, "density reference: mixture1d, kde or model");
  eval->add_option("--ref-gamma", ef.ref_gamma, "gamma of the KDE reference");
  eval->add_option("--ref-train", ef.ref_train, "training CSV for the KDE reference");
  eval->add_option("--ref-model", ef.ref_model, "reference model JSON");
  eval->add_flag("--log-space", ef.log_space, "compare log densities");
  eval->add_option("--classes", ef.classes, "ordinal class count for mae");
  eval->add_option("--out", ef.out_path, "metrics JSON path");

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "KDE vs DMKDE prediction-time sweep");
  std::string bench_ns = "1000,10000,100000";
  Index bench_d = 2, bench_D = 1024, bench_r = 128, bench_q = 1000;
  double bench_gamma = 1.0;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  bench->add_option("--ns", bench_ns, "comma-separated training sizes");
  bench->add_option("--d", bench_d, "input dimension");
  bench->add_option("--gamma", bench_gamma, "kernel spread");
  bench->add_option("--rff-dim", bench_D, "DMKDE feature dimension");
  bench->add_option("--rank", bench_r, "DMKDE rank");
  bench->add_option("--queries", bench_q, "queries per timed batch");
  bench->add_option("--seed", bench_seed, "seed");
  bench->add_option("--out", bench_out, "output CSV path")->required();

  // convergence --------------------------------------------------------------
  auto* conv = app.add_subcommand(
      "convergence", "DMKDE accuracy vs RFF dimension on the 1-D mixture");
  std::string conv_ds = "64,256,1024";
  int conv_seeds = 30;
  ConvergenceConfig cc;
  std::string conv_out;
  conv->add_option("--d-list", conv_ds, "comma-separated RFF dimensions");
  conv->add_option("--seeds", conv_seeds, "seeds per dimension");
  conv->add_option("--n-train", cc.n_train, "training samples per run");
  conv->add_option("--gamma", cc.gamma, "kernel spread");
  conv->add_option("--rank", cc.rank, "factorization rank");
  conv->add_option("--grid-lo", cc.grid_lo, "grid lower bound");
  conv->add_option("--grid-hi", cc.grid_hi, "grid upper bound");
  conv->add_option("--grid-points", cc.grid_points, "grid resolution");
  conv->add_option("--seed", cc.seed, "base seed");
  conv->add_option("--out", conv_out, "output CSV path")->required();

  // search -----------------------------------------------------------------
  auto* search = app.add_subcommand("search", "random hyperparameter search with CV");
  std::string se_model = "dmkdc", se_data, se_label, se_out, se_strategy = "estimate";
  bool se_no_header = false;
  SearchSettings ss;
  search->add_option("--model", se_model, "dmkde, dmkdc, qmc or qmr")->required();
  search->add_option("--data", se_data, "training CSV")->required();
  search->add_option("--label-col", se_label, "label column");
  search->add_flag("--no-header", se_no_header, "CSV has no header row");
  search->add_option("--n-configs", ss.n_configs, "sampled configurations");
  search->add_option("--folds", ss.folds, "cross-validation folds");
  search->add_option("--seed", ss.seed, "search seed");
  search->add_option("--rff-dim", ss.rff_dim, "RFF dimension");
  search->add_option("--landmarks", ss.landmarks, "QMR output landmarks");
  search->add_option("--strategy", se_strategy, "estimate or sgd")
      ->check(CLI::IsMember({"estimate", "sgd"}));
  search->add_option("--epochs", ss.sgd_epochs, "epochs when strategy is sgd");
  search->add_option("--out", se_out, "best-config JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (synth->parsed()) return cmd_synth(synth_kind, synth_n, synth_seed, synth_out);
  if (fit->parsed()) return cmd_fit(fit_model, fit_strategy, ff);
  if (predict->parsed()) {
    return cmd_predict(pr_model, pr_data, pr_label, pr_no_header, pr_classes, pr_out);
  }
  if (eval->parsed()) return cmd_eval(ef);
  if (bench->parsed()) {
    auto rows = timing_sweep(parse_index_list(bench_ns, "--ns"), bench_d, bench_gamma,
                             bench_D, bench_r, bench_q, bench_seed);
    write_timing_csv(rows, bench_out, machine_descriptor());
    std::cout << "wrote " << rows.size() << " timing rows to " << bench_out << "\n";
    return 0;
  }
  if (conv->parsed()) {
    auto rows =
        convergence_study(parse_index_list(conv_ds, "--d-list"), conv_seeds, cc);
    write_convergence_csv(rows, conv_out);
    std::cout << "wrote " << rows.size() << " convergence rows to " << conv_out << "\n";
    return 0;
  }
  if (search->parsed()) {
    if (se_model == "dmkde") {
      ss.kind = ModelKind::dmkde;
    } else if (se_model == "dmkdc") {
      ss.kind = ModelKind::dmkdc;
    } else if (se_model == "qmc") {
      ss.kind = ModelKind::qmc;
    } else if (se_model == "qmr") {
      ss.kind = ModelKind::qmr;
    } else {
      throw CLI::ValidationError("--model", "unknown model '" + se_model + "'");
    }
    if (se_strategy == "estimate") ss.sgd_epochs = 0;
    Dataset data = load_dataset(se_data, se_label, se_no_header);
    Vector labels = data.labels ? *data.labels : Vector();
    SearchResult result = random_search(data.features, labels, ss);

    Json evaluated = Json::array();
    for (const auto& cfg : result.evaluated) {
      evaluated.push_back(Json{{"gamma", cfg.gamma},
                               {"rank_fraction", cfg.rank_fraction},
                               {"lr", cfg.learning_rate},
                               {"beta", cfg.beta},
                               {"metric", cfg.metric}});
    }
    Json out{{"schema", "densmat/search/v1"},
             {"config", Json{{"model", se_model},
                             {"data", se_data},
                             {"n_configs", ss.n_configs},
                             {"folds", ss.folds},
                             {"seed", ss.seed},
                             {"rff_dim", ss.rff_dim},
                             {"strategy", se_strategy},
                             {"epochs", ss.sgd_epochs}}},
             {"metric_name", result.metric_name},
             {"maximize", result.maximize},
             {"best", Json{{"gamma", result.best.gamma},
                           {"rank_fraction", result.best.rank_fraction},
                           {"lr", result.best.learning_rate},
                           {"beta", result.best.beta},
                           {"metric", result.best.metric}}},
             {"evaluated", evaluated}};
    save_json(out, se_out);
    std::cout << "best " << result.metric_name << "=" << result.best.metric
              << " gamma=" << result.best.gamma << " -> " << se_out << "\n";
    return 0;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const CLI::ParseError&) {
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const densmat::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const densmat::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
