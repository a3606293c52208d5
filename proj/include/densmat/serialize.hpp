#pragma once

#include <fstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "densmat/dmkdc.hpp"
#include "densmat/qmr.hpp"

namespace densmat {

using Json = nlohmann::json;

namespace detail {

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& rows) {
  const Index n = static_cast<Index>(rows.size());
  if (n == 0) return Matrix(0, 0);
  const Index d = static_cast<Index>(rows[0].size());
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != d) {
      throw DataError("model json: ragged matrix rows");
    }
    for (Index j = 0; j < d; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
  }
  return m;
}

inline Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Vector vector_from_json(const Json& arr) {
  Vector v(static_cast<Index>(arr.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline void expect_schema(const Json& j, const std::string& schema) {
  if (!j.contains("schema") || j.at("schema").get<std::string>() != schema) {
    throw DataError("model json: expected schema '" + schema + "'");
  }
}

}  // namespace detail

inline Json to_json(const RffMap& map) {
  return Json{{"weights", detail::matrix_to_json(map.weights)},
              {"biases", detail::vector_to_json(map.biases)},
              {"gamma", map.gamma},
              {"dim_in", map.dim_in()},
              {"dim_out", map.dim_out()},
              {"seed", map.seed}};
}

inline RffMap rff_from_json(const Json& j) {
  RffMap map;
  map.weights = detail::matrix_from_json(j.at("weights"));
  map.biases = detail::vector_from_json(j.at("biases"));
  map.gamma = j.at("gamma").get<double>();
  map.seed = j.at("seed").get<std::uint64_t>();
  return map;
}

inline Json to_json(const FactorizedDensityMatrix& rho) {
  return Json{{"rank", rho.rank()},
              {"dim", rho.dim()},
              {"lambda", detail::vector_to_json(rho.lambda)},
              {"v", detail::matrix_to_json(rho.v)}};
}

inline FactorizedDensityMatrix factorized_from_json(const Json& j) {
  FactorizedDensityMatrix rho;
  rho.lambda = detail::vector_from_json(j.at("lambda"));
  rho.v = detail::matrix_from_json(j.at("v"));
  return rho;
}

inline std::string trained_by_name(TrainedBy t) {
  return t == TrainedBy::estimation ? "estimation" : "sgd";
}

inline TrainedBy trained_by_from_name(const std::string& name) {
  if (name == "estimation") return TrainedBy::estimation;
  if (name == "sgd") return TrainedBy::sgd;
  throw DataError("model json: unknown trained_by '" + name + "'");
}

inline constexpr const char* kDmkdeSchema = "densmat/dmkde/v1";
inline constexpr const char* kDmkdcSchema = "densmat/dmkdc/v1";
inline constexpr const char* kQmcSchema = "densmat/qmc/v1";
inline constexpr const char* kQmrSchema = "densmat/qmr/v1";

inline Json to_json(const DmkdeModel& model) {
  require(model.embedding == EmbeddingMode::normalized,
          "serialize: raw-embedding DMKDE models are in-memory only");
  return Json{{"schema", kDmkdeSchema},
              {"gamma", model.gamma},
              {"d", model.dim_in},
              {"D", model.rff.dim_out()},
              {"r", model.requested_rank},
              {"seed", model.seed},
              {"rff", to_json(model.rff)},
              {"rho", to_json(model.rho)},
              {"trained_by", trained_by_name(model.trained_by)}};
}

inline DmkdeModel dmkde_from_json(const Json& j) {
  detail::expect_schema(j, kDmkdeSchema);
  DmkdeModel model;
  model.gamma = j.at("gamma").get<double>();
  model.dim_in = j.at("d").get<Index>();
  model.requested_rank = j.at("r").get<Index>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.rff = rff_from_json(j.at("rff"));
  model.rho = factorized_from_json(j.at("rho"));
  model.norm_const = normalizing_constant(model.gamma, model.dim_in);
  model.trained_by = trained_by_from_name(j.at("trained_by").get<std::string>());
  return model;
}

inline Json to_json(const DmkdcModel& model) {
  Json per_class = Json::array();
  for (const auto& rho : model.per_class) {
    per_class.push_back(Json{{"lambda", detail::vector_to_json(rho.lambda)},
                             {"v", detail::matrix_to_json(rho.v)}});
  }
  return Json{{"schema", kDmkdcSchema},
              {"K", model.num_classes()},
              {"priors", detail::vector_to_json(model.priors)},
              {"gamma", model.gamma},
              {"d", model.dim_in},
              {"r", model.requested_rank},
              {"seed", model.seed},
              {"rff", to_json(model.rff)},
              {"per_class", per_class},
              {"trained_by", trained_by_name(model.trained_by)}};
}

inline DmkdcModel dmkdc_from_json(const Json& j) {
  detail::expect_schema(j, kDmkdcSchema);
  DmkdcModel model;
  model.priors = detail::vector_from_json(j.at("priors"));
  model.gamma = j.at("gamma").get<double>();
  model.dim_in = j.at("d").get<Index>();
  model.requested_rank = j.at("r").get<Index>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.rff = rff_from_json(j.at("rff"));
  for (const auto& entry : j.at("per_class")) {
    model.per_class.push_back(factorized_from_json(entry));
  }
  model.trained_by = trained_by_from_name(j.at("trained_by").get<std::string>());
  if (static_cast<Index>(model.per_class.size()) != j.at("K").get<Index>()) {
    throw DataError("model json: per_class count does not match K");
  }
  return model;
}

inline Json to_json(const QmcInputMap& map) {
  if (map.kind == QmcInputMap::Kind::rff) {
    return Json{{"kind", "rff_normalized"}, {"rff", to_json(map.rff)}};
  }
  return Json{{"kind", "one_hot"}, {"K", map.categories}};
}

inline QmcInputMap qmc_input_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "rff_normalized") return QmcInputMap::make_rff(rff_from_json(j.at("rff")));
  if (kind == "one_hot") return QmcInputMap::make_one_hot(j.at("K").get<Index>());
  throw DataError("model json: unknown input map kind '" + kind + "'");
}

inline Json to_json(const QmcOutputMap& map) {
  if (map.kind == QmcOutputMap::Kind::one_hot) {
    return Json{{"kind", "one_hot"}, {"K", map.categories}};
  }
  return Json{{"kind", "softmax"}, {"landmarks", map.sm->dim()}, {"beta", map.sm->beta()}};
}

inline QmcOutputMap qmc_output_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "one_hot") return QmcOutputMap::make_one_hot(j.at("K").get<Index>());
  if (kind == "softmax") {
    return QmcOutputMap::make_softmax(j.at("landmarks").get<Index>(),
                                      j.at("beta").get<double>());
  }
  throw DataError("model json: unknown output map kind '" + kind + "'");
}

inline Json to_json(const QmcModel& model) {
  return Json{{"schema", kQmcSchema},
              {"input_map", to_json(model.input_map)},
              {"output_map", to_json(model.output_map)},
              {"joint", to_json(model.joint)},
              {"r", model.requested_rank},
              {"trained_by", trained_by_name(model.trained_by)}};
}

inline QmcModel qmc_from_json(const Json& j) {
  detail::expect_schema(j, kQmcSchema);
  QmcModel model;
  model.input_map = qmc_input_from_json(j.at("input_map"));
  model.output_map = qmc_output_from_json(j.at("output_map"));
  model.joint = factorized_from_json(j.at("joint"));
  model.requested_rank = j.at("r").get<Index>();
  model.trained_by = trained_by_from_name(j.at("trained_by").get<std::string>());
  return model;
}

inline Json to_json(const QmrModel& model) {
  Json base = to_json(model.base);
  base.erase("schema");
  return Json{{"schema", kQmrSchema},
              {"base", std::move(base)},
              {"alpha_tradeoff", model.alpha_tradeoff},
              {"scaler", Json{{"min", model.scaler.min}, {"max", model.scaler.max}}}};
}

inline QmrModel qmr_from_json(const Json& j) {
  detail::expect_schema(j, kQmrSchema);
  QmrModel model;
  const Json& base = j.at("base");
  model.base.input_map = qmc_input_from_json(base.at("input_map"));
  model.base.output_map = qmc_output_from_json(base.at("output_map"));
  model.base.joint = factorized_from_json(base.at("joint"));
  model.base.requested_rank = base.at("r").get<Index>();
  model.base.trained_by = trained_by_from_name(base.at("trained_by").get<std::string>());
  model.alpha_tradeoff = j.at("alpha_tradeoff").get<double>();
  model.scaler.min = j.at("scaler").at("min").get<double>();
  model.scaler.max = j.at("scaler").at("max").get<double>();
  return model;
}

inline void save_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_json: cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_json: cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw DataError("load_json: '" + path + "': " + e.what());
  }
  return j;
}

/// Any trained model, discriminated by its schema string.
using AnyModel = std::variant<DmkdeModel, DmkdcModel, QmcModel, QmrModel>;

inline AnyModel load_any_model(const std::string& path) {
  Json j = load_json(path);
  if (!j.contains("schema")) throw DataError("model json: missing schema field");
  const std::string schema = j.at("schema").get<std::string>();
  if (schema == kDmkdeSchema) return dmkde_from_json(j);
  if (schema == kDmkdcSchema) return dmkdc_from_json(j);
  if (schema == kQmcSchema) return qmc_from_json(j);
  if (schema == kQmrSchema) return qmr_from_json(j);
  throw DataError("model json: unsupported schema '" + schema + "'");
}

}  // namespace densmat
