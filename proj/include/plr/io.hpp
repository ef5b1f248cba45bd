#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "plr/chain.hpp"
#include "plr/diagnostics.hpp"
#include "plr/model.hpp"
#include "plr/variational.hpp"

namespace plr {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kModelFormatVersion = 1;

struct CsvOptions {
  std::string label_column = "class";
  // When set, labels are mapped through this list instead of by first
  // appearance, and unknown labels are a parse error.
  std::optional<std::vector<std::string>> known_labels;
  // Allow files without the label column (prediction inputs).
  bool label_optional = false;
};

struct LabelledData {
  Dataset data;  // labels are -1 when the file had no label column
  std::vector<std::string> covariate_names;
  std::vector<std::string> label_names;  // 0-based class index -> original label
  bool has_labels = true;
};

// Header row required. Every column except the label column must be
// numeric; a missing or non-numeric cell is reported with its 1-based data
// row and column name.
LabelledData parse_csv(std::istream& in, const CsvOptions& options, const std::string& source = "<stream>");
LabelledData load_csv(const std::string& path, const CsvOptions& options);

// Training commands refuse data with fewer than two observed classes.
void require_trainable(const LabelledData& data);

enum class ModelKind { kEm, kGibbs, kVariational, kLogit };

std::string to_string(ModelKind kind);

// Everything needed to reproduce predictions from raw covariates.
struct Model {
  ModelKind kind = ModelKind::kEm;
  std::string label_column = "class";
  std::vector<std::string> label_names;
  std::vector<std::string> covariate_names;
  std::optional<Standardizer> standardization;
  std::string feature_map;  // Plackett-Luce models only
  std::uint64_t seed = 0;
  double hyper_a = 1.0;
  double hyper_b = 1.0;
  double hyper_c = 1.0;
  double hyper_d = 1.0;
  bool intercept = true;

  Eigen::MatrixXd lambda;  // point estimate or posterior mean, unnormalized
  std::vector<std::pair<int, int>> zero_pattern;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  std::optional<Chain> chain;
  std::optional<VariationalState> variational;

  // Class probabilities (n x K) for raw covariates.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& raw) const;
};

void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in);
void save_model_file(const std::string& path, const Model& model);
Model load_model_file(const std::string& path);

}  // namespace plr
