#include "plr/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "plr/errors.hpp"
#include "plr/gibbs.hpp"
#include "plr/sparse_logit.hpp"

namespace plr {

namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = text.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

LabelledData parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, source + ": empty file, header row expected");
  const std::vector<std::string> header = split_fields(line);
  std::ptrdiff_t label_index = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == options.label_column) label_index = static_cast<std::ptrdiff_t>(c);
  }
  if (label_index < 0 && !options.label_optional) {
    throw Error(ErrorKind::kParse, source + ": label column '" + options.label_column + "' not found in header");
  }

  LabelledData out;
  out.has_labels = label_index >= 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) != label_index) out.covariate_names.push_back(header[c]);
  }
  if (out.covariate_names.empty()) throw Error(ErrorKind::kParse, source + ": no covariate columns");

  std::map<std::string, int> label_ids;
  if (options.known_labels) {
    out.label_names = *options.known_labels;
    for (std::size_t k = 0; k < out.label_names.size(); ++k) label_ids[out.label_names[k]] = static_cast<int>(k);
  }

  std::vector<double> values;
  std::vector<int> labels;
  long row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::kParse, source + ": row " + std::to_string(row) + " has " +
                                         std::to_string(fields.size()) + " fields, header has " +
                                         std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_index) {
        if (fields[c].empty()) {
          throw Error(ErrorKind::kParse, source + ": row " + std::to_string(row) + ", column '" + header[c] +
                                             "': missing label");
        }
        auto it = label_ids.find(fields[c]);
        if (it == label_ids.end()) {
          if (options.known_labels) {
            throw Error(ErrorKind::kParse, source + ": row " + std::to_string(row) + ", column '" + header[c] +
                                               "': unknown label '" + fields[c] + "'");
          }
          it = label_ids.emplace(fields[c], static_cast<int>(out.label_names.size())).first;
          out.label_names.push_back(fields[c]);
        }
        labels.push_back(it->second);
        continue;
      }
      const std::optional<double> value = parse_number(fields[c]);
      if (!value) {
        throw Error(ErrorKind::kParse, source + ": row " + std::to_string(row) + ", column '" + header[c] + "': " +
                                           (fields[c].empty() ? std::string("missing value")
                                                              : "non-numeric value '" + fields[c] + "'"));
      }
      values.push_back(*value);
    }
  }
  if (row == 0) throw Error(ErrorKind::kParse, source + ": no data rows");

  const auto d = static_cast<Eigen::Index>(out.covariate_names.size());
  out.data.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), row, d);
  if (out.has_labels) {
    out.data.labels = Eigen::Map<const Eigen::VectorXi>(labels.data(), row);
  } else {
    out.data.labels = Eigen::VectorXi::Constant(row, -1);
  }
  out.data.num_classes = static_cast<int>(out.label_names.size());
  return out;
}

LabelledData load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  return parse_csv(in, options, path);
}

void require_trainable(const LabelledData& data) {
  if (!data.has_labels) throw Error(ErrorKind::kInsufficientData, "training data has no label column");
  int present = 0;
  for (int count : data.data.class_counts()) present += count > 0 ? 1 : 0;
  if (present < 2) {
    throw Error(ErrorKind::kInsufficientData, "training data must contain at least two classes");
  }
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kEm: return "em";
    case ModelKind::kGibbs: return "gibbs";
    case ModelKind::kVariational: return "vb";
    case ModelKind::kLogit: return "logit";
  }
  return "unknown";
}

namespace {

ModelKind parse_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::kEm, ModelKind::kGibbs, ModelKind::kVariational, ModelKind::kLogit}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kParse, "unknown model kind '" + name + "'");
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorKind::kParse, std::string(what) + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorKind::kParse, std::string(what) + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

Eigen::MatrixXd Model::predict(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != static_cast<Eigen::Index>(covariate_names.size())) {
    throw Error(ErrorKind::kShapeMismatch, "data has " + std::to_string(raw.cols()) + " covariates, model expects " +
                                               std::to_string(covariate_names.size()));
  }
  const Eigen::MatrixXd X = standardization ? standardization->apply(raw) : raw;
  if (kind == ModelKind::kLogit) {
    if (!chain) throw Error(ErrorKind::kEmptyChain, "logit model has no stored draws");
    return logit_predict_rows(*chain, X, intercept);
  }
  const FeatureMap map = FeatureMap::parse(feature_map, static_cast<int>(X.cols()));
  const Eigen::MatrixXd W = transform_rows(X, map);
  switch (kind) {
    case ModelKind::kGibbs:
      if (!chain) throw Error(ErrorKind::kEmptyChain, "Gibbs model has no stored draws");
      return posterior_predict_rows(*chain, W);
    case ModelKind::kVariational:
      if (!variational) throw Error(ErrorKind::kParse, "variational model has no parameters");
      return vb_predict_rows(*variational, W);
    default: {
      Eigen::MatrixXd out(W.rows(), lambda.rows());
      for (Eigen::Index i = 0; i < W.rows(); ++i) out.row(i) = class_probabilities(W.row(i).transpose(), lambda).transpose();
      return out;
    }
  }
}

void save_model(std::ostream& out, const Model& model) {
  json j;
  j["format"] = "plr-model";
  j["version"] = kModelFormatVersion;
  j["library_version"] = kLibraryVersion;
  j["kind"] = to_string(model.kind);
  j["label_column"] = model.label_column;
  j["labels"] = model.label_names;
  j["covariates"] = model.covariate_names;
  if (model.standardization) {
    j["standardization"] = {{"mean", vector_to_json(model.standardization->mean)},
                            {"scale", vector_to_json(model.standardization->scale)}};
  } else {
    j["standardization"] = nullptr;
  }
  j["seed"] = model.seed;
  if (model.kind == ModelKind::kLogit) {
    j["hyperparameters"] = {{"c", model.hyper_c}, {"d", model.hyper_d}, {"intercept", model.intercept}};
  } else {
    j["feature_map"] = model.feature_map;
    j["hyperparameters"] = {{"a", model.hyper_a}, {"b", model.hyper_b}};
    j["normalized_weights"] = matrix_to_json(model.lambda / model.lambda.sum());
    j["total_mass"] = model.lambda.sum();
    j["lambda"] = matrix_to_json(model.lambda);
  }
  if (model.kind == ModelKind::kEm) {
    json zeros = json::array();
    for (const auto& [k, jj] : model.zero_pattern) zeros.push_back({k + 1, jj + 1});
    j["zero_pattern"] = zeros;
  }
  if (!model.objective_trace.empty()) j["objective_trace"] = model.objective_trace;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  if (model.chain) {
    const Chain& c = *model.chain;
    j["chain"] = {{"rows", c.coef_rows},
                  {"cols", c.coef_cols},
                  {"hyper_name", c.hyper_name},
                  {"draws", matrix_to_json(c.draws)},
                  {"hyper", vector_to_json(c.hyper)},
                  {"log_likelihood", vector_to_json(c.log_likelihood)},
                  {"mh_accepted", c.mh_accepted},
                  {"mh_proposed", c.mh_proposed}};
  }
  if (model.variational) {
    j["variational"] = {{"shape", matrix_to_json(model.variational->shape)},
                        {"rate", matrix_to_json(model.variational->rate)}};
  }
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed to write model");
}

Model load_model(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("model is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "plr-model") throw Error(ErrorKind::kParse, "not a model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorKind::kParse, "unsupported model version " + std::to_string(version));
    }
    Model m;
    m.kind = parse_kind(j.at("kind").get<std::string>());
    m.label_column = j.at("label_column").get<std::string>();
    m.label_names = j.at("labels").get<std::vector<std::string>>();
    m.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    if (!j.at("standardization").is_null()) {
      m.standardization = Standardizer{vector_from_json(j["standardization"].at("mean")),
                                       vector_from_json(j["standardization"].at("scale"))};
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& hyper = j.at("hyperparameters");
    if (m.kind == ModelKind::kLogit) {
      m.hyper_c = hyper.at("c").get<double>();
      m.hyper_d = hyper.at("d").get<double>();
      m.intercept = hyper.at("intercept").get<bool>();
    } else {
      m.feature_map = j.at("feature_map").get<std::string>();
      m.hyper_a = hyper.at("a").get<double>();
      m.hyper_b = hyper.at("b").get<double>();
      m.lambda = matrix_from_json(j.at("lambda"), "lambda");
    }
    if (j.contains("zero_pattern")) {
      for (const json& z : j["zero_pattern"]) m.zero_pattern.emplace_back(z.at(0).get<int>() - 1, z.at(1).get<int>() - 1);
    }
    if (j.contains("objective_trace")) m.objective_trace = j["objective_trace"].get<std::vector<double>>();
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    if (j.contains("chain")) {
      const json& c = j["chain"];
      Chain chain;
      chain.coef_rows = c.at("rows").get<Eigen::Index>();
      chain.coef_cols = c.at("cols").get<Eigen::Index>();
      chain.hyper_name = c.at("hyper_name").get<std::string>();
      chain.draws = matrix_from_json(c.at("draws"), "chain draws");
      chain.hyper = vector_from_json(c.at("hyper"));
      chain.log_likelihood = vector_from_json(c.at("log_likelihood"));
      chain.mh_accepted = c.value("mh_accepted", 0L);
      chain.mh_proposed = c.value("mh_proposed", 0L);
      if (chain.draws.cols() != chain.coef_rows * chain.coef_cols) {
        throw Error(ErrorKind::kParse, "chain draws do not match the coefficient shape");
      }
      m.chain = std::move(chain);
    }
    if (j.contains("variational")) {
      VariationalState state;
      state.shape = matrix_from_json(j["variational"].at("shape"), "variational shape");
      state.rate = matrix_from_json(j["variational"].at("rate"), "variational rate");
      m.variational = std::move(state);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("malformed model: ") + e.what());
  }
}

void save_model_file(const std::string& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  save_model(out, model);
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  return load_model(in);
}

}  // namespace plr
