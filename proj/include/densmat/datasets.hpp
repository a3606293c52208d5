#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "densmat/density_ops.hpp"
#include "densmat/random.hpp"
#include "densmat/types.hpp"

namespace densmat {

/// Per-column min-max scaler state. Constant columns scale to zero.
struct MinMaxScaler {
  Vector col_min;
  Vector col_max;

  Matrix apply(const Matrix& rows) const {
    Matrix out = rows;
    for (Index j = 0; j < out.cols(); ++j) {
      const double span = col_max[j] - col_min[j];
      if (span > 0.0) {
        out.col(j) = (out.col(j).array() - col_min[j]) / span;
      } else {
        out.col(j).setZero();
      }
    }
    return out;
  }

  Matrix invert(const Matrix& scaled) const {
    Matrix out = scaled;
    for (Index j = 0; j < out.cols(); ++j) {
      const double span = col_max[j] - col_min[j];
      out.col(j) = out.col(j).array() * span + col_min[j];
    }
    return out;
  }
};

/// Column-major numeric table with an optional label/target column and the
/// provenance needed to reproduce it.
struct Dataset {
  Matrix features;  // N x d
  std::optional<Vector> labels;

  struct Meta {
    std::string source;
    std::uint64_t seed = 0;
    std::vector<std::string> column_names;
    std::optional<MinMaxScaler> scaler;
    Index rejected_rows = 0;
  } meta;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

/// True pdf of the 1-D benchmark mixture 0.3*N(0,1) + 0.7*N(5,1).
inline double mixture_1d_pdf(double x) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double a = std::exp(-0.5 * x * x);
  const double b = std::exp(-0.5 * (x - 5.0) * (x - 5.0));
  return inv_sqrt_2pi * (0.3 * a + 0.7 * b);
}

inline Dataset gen_mixture_1d(Index n, std::uint64_t seed) {
  require(n >= 1, "gen_mixture_1d: need at least one sample");
  Dataset data;
  data.features.resize(n, 1);
  Rng rng(seed);
  for (Index i = 0; i < n; ++i) {
    const double mean = rng.uniform() < 0.3 ? 0.0 : 5.0;
    data.features(i, 0) = rng.normal(mean, 1.0);
  }
  data.meta.source = "synth:mixture1d";
  data.meta.seed = seed;
  data.meta.column_names = {"x1"};
  return data;
}

/// Three Archimedean spiral arms r = t, angle = t + {0, 2pi/3, 4pi/3},
/// t in [0.25, 2.5], isotropic Gaussian noise. One t is drawn per triple of
/// samples so a noise-free dataset is exactly invariant under rotating arms
/// into each other. Labels are 1..3, balanced to within one sample.
inline Dataset gen_spirals_2d(Index n, std::uint64_t seed, double noise = 0.05) {
  require(n >= 3, "gen_spirals_2d: need at least three samples");
  Dataset data;
  data.features.resize(n, 2);
  Vector labels(n);
  Rng rng(seed);
  const double offset = 2.0 * std::numbers::pi / 3.0;
  Index i = 0;
  while (i < n) {
    const double t = rng.uniform(0.25, 2.5);
    for (Index arm = 0; arm < 3 && i < n; ++arm, ++i) {
      const double angle = t + offset * static_cast<double>(arm);
      data.features(i, 0) = t * std::cos(angle) + noise * rng.normal();
      data.features(i, 1) = t * std::sin(angle) + noise * rng.normal();
      labels[i] = static_cast<double>(arm + 1);
    }
  }
  data.labels = labels;
  data.meta.source = "synth:spirals";
  data.meta.seed = seed;
  data.meta.column_names = {"x1", "x2", "label"};
  return data;
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline bool parse_double(const std::string& field, double& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && begin != end;
}

inline std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

/// Loads a comma-separated numeric table. label_column selects a column by
/// header name or 0-based index; rows containing NaN/Inf are dropped and
/// counted, ragged or non-numeric rows abort with the offending line number.
inline Dataset load_csv(const std::string& path,
                        const std::optional<std::string>& label_column = std::nullopt,
                        bool has_header = true) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");

  Dataset data;
  std::string line;
  Index line_no = 0;
  std::vector<std::string> names;
  Index n_cols = -1;

  if (has_header) {
    if (!std::getline(in, line)) throw DataError("load_csv: '" + path + "' is empty");
    ++line_no;
    names = detail::split_line(line);
    for (auto& name : names) {
      while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
    }
    n_cols = static_cast<Index>(names.size());
  }

  Index label_idx = -1;
  auto resolve_label = [&](Index cols) {
    if (!label_column) return;
    double as_number = 0.0;
    if (detail::parse_double(*label_column, as_number)) {
      label_idx = static_cast<Index>(as_number);
    } else {
      for (Index j = 0; j < static_cast<Index>(names.size()); ++j) {
        if (names[static_cast<std::size_t>(j)] == *label_column) label_idx = j;
      }
      if (label_idx < 0) {
        throw DataError("load_csv: label column '" + *label_column + "' not found");
      }
    }
    if (label_idx < 0 || label_idx >= cols) {
      throw DataError("load_csv: label column index out of range");
    }
  };

  std::vector<std::vector<double>> rows;
  Index rejected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = detail::split_line(line);
    if (n_cols < 0) n_cols = static_cast<Index>(fields.size());
    if (static_cast<Index>(fields.size()) != n_cols) {
      throw DataError("load_csv: line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n_cols) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    bool finite = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_double(fields[j], row[j])) {
        throw DataError("load_csv: line " + std::to_string(line_no) +
                        ": cannot parse field '" + fields[j] + "'");
      }
      if (!std::isfinite(row[j])) finite = false;
    }
    if (!finite) {
      ++rejected;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("load_csv: '" + path + "' has no data rows");
  resolve_label(n_cols);

  const Index n = static_cast<Index>(rows.size());
  const Index d = label_idx >= 0 ? n_cols - 1 : n_cols;
  require(d >= 1, "load_csv: no feature columns left");
  data.features.resize(n, d);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) {
    Index jj = 0;
    for (Index j = 0; j < n_cols; ++j) {
      const double value = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (j == label_idx) {
        labels[i] = value;
      } else {
        data.features(i, jj++) = value;
      }
    }
  }
  if (label_idx >= 0) data.labels = labels;
  data.meta.source = path;
  data.meta.rejected_rows = rejected;
  if (has_header) {
    for (Index j = 0; j < n_cols; ++j) {
      if (j != label_idx) data.meta.column_names.push_back(names[static_cast<std::size_t>(j)]);
    }
    if (label_idx >= 0) data.meta.column_names.push_back(names[static_cast<std::size_t>(label_idx)]);
  }
  return data;
}

/// Writes features (and labels, last column) as CSV with a header row.
inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "' for writing");
  const Index d = data.dim();
  std::vector<std::string> names = data.meta.column_names;
  if (static_cast<Index>(names.size()) != d + (data.labels ? 1 : 0)) {
    names.clear();
    for (Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
    if (data.labels) names.push_back("label");
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << (j ? "," : "") << names[j];
  }
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < d; ++j) {
      out << (j ? "," : "") << detail::format_double(data.features(i, j));
    }
    if (data.labels) out << ',' << detail::format_double((*data.labels)[i]);
    out << '\n';
  }
}

/// Centering + top-k covariance eigenvectors; the projection is stored so the
/// same transform can be applied to held-out data.
struct PcaProjection {
  Vector mean;
  Matrix components;  // k x d
  Vector explained_variance;

  Matrix apply(const Matrix& rows) const {
    return (rows.rowwise() - mean.transpose()) * components.transpose();
  }

  Matrix reconstruct(const Matrix& projected) const {
    return (projected * components).rowwise() + mean.transpose();
  }
};

inline std::pair<Dataset, PcaProjection> pca_reduce(const Dataset& data, Index k) {
  const Index d = data.dim();
  require(k >= 1 && k <= d, "pca_reduce: k must be in 1..d");
  require(data.size() >= 2, "pca_reduce: need at least two samples");

  PcaProjection proj;
  proj.mean = data.features.colwise().mean();
  Matrix centered = data.features.rowwise() - proj.mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(data.size() - 1);
  SymmetricEig eig = spectral_decompose(cov);
  proj.components = eig.vectors.leftCols(k).transpose();
  proj.explained_variance = eig.values.head(k);

  Dataset reduced;
  reduced.features = centered * proj.components.transpose();
  reduced.labels = data.labels;
  reduced.meta = data.meta;
  reduced.meta.column_names.clear();
  reduced.meta.scaler.reset();
  return {std::move(reduced), std::move(proj)};
}

inline MinMaxScaler fit_minmax(const Matrix& rows) {
  MinMaxScaler scaler;
  scaler.col_min = rows.colwise().minCoeff();
  scaler.col_max = rows.colwise().maxCoeff();
  return scaler;
}

/// Scales every feature column to [0, 1]; the scaler state is recorded in the
/// dataset meta. Constant columns map to zero (reported on the return value).
inline Dataset minmax_scale(const Dataset& data, Index* constant_columns = nullptr) {
  MinMaxScaler scaler = fit_minmax(data.features);
  if (constant_columns) {
    *constant_columns = 0;
    for (Index j = 0; j < data.dim(); ++j) {
      if (!(scaler.col_max[j] - scaler.col_min[j] > 0.0)) ++*constant_columns;
    }
  }
  Dataset out = data;
  out.features = scaler.apply(data.features);
  out.meta.scaler = scaler;
  return out;
}

/// Seeded train/test split. With stratify the class proportions are preserved
/// to within one sample per class (labels are then required).
inline std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                         bool stratify, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split: train fraction must be in (0, 1)");
  require(!stratify || data.labels.has_value(), "split: stratified split needs labels");

  const Index n = data.size();
  std::vector<Index> train_idx;
  std::vector<Index> test_idx;
  if (!stratify) {
    std::vector<Index> order = shuffled_indices(n, seed);
    const Index n_train = static_cast<Index>(std::llround(train_fraction * n));
    train_idx.assign(order.begin(), order.begin() + n_train);
    test_idx.assign(order.begin() + n_train, order.end());
  } else {
    std::vector<double> classes;
    for (Index i = 0; i < n; ++i) {
      const double c = (*data.labels)[i];
      if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
    }
    std::sort(classes.begin(), classes.end());
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      std::vector<Index> members;
      for (Index i = 0; i < n; ++i) {
        if ((*data.labels)[i] == classes[ci]) members.push_back(i);
      }
      Rng rng(derive_seed(seed, ci));
      rng.shuffle(members);
      const Index n_train =
          static_cast<Index>(std::llround(train_fraction * members.size()));
      train_idx.insert(train_idx.end(), members.begin(), members.begin() + n_train);
      test_idx.insert(test_idx.end(), members.begin() + n_train, members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
  }

  auto take = [&](const std::vector<Index>& idx) {
    Dataset part;
    part.features.resize(static_cast<Index>(idx.size()), data.dim());
    Vector labels(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      part.features.row(static_cast<Index>(i)) = data.features.row(idx[i]);
      if (data.labels) labels[static_cast<Index>(i)] = (*data.labels)[idx[i]];
    }
    if (data.labels) part.labels = labels;
    part.meta = data.meta;
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

}  // namespace densmat
