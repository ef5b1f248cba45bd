#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plr/chain.hpp"
#include "plr/em.hpp"
#include "plr/gibbs.hpp"
#include "plr/model.hpp"
#include "plr/sparse_logit.hpp"
#include "plr/stochastic.hpp"
#include "plr/variational.hpp"

namespace plr {

// Effective sample size N / (1 + 2 sum_k rho(k)) with the initial monotone
// sequence truncation: paired autocovariances Gamma_m = g(2m) + g(2m+1) are
// summed while positive, each capped by its predecessor. Autocovariances use
// the divisor N. The result is clamped to [1, N]; a constant series gives 1.
double ess(const Eigen::Ref<const Eigen::VectorXd>& draws);

struct EssReport {
  Eigen::VectorXd per_coordinate;
  double min_ess = 0.0;
  Eigen::Index argmin = 0;
  double wall_seconds = 0.0;
  double time_per_ess = 0.0;
  std::optional<double> relative_speed;
};

// ESS of every stored coordinate. With normalize, each draw is divided by its
// total first (use for Plackett-Luce chains).
EssReport min_ess_report(const Chain& chain, double wall_seconds, bool normalize,
                         const EssReport* reference = nullptr);

// reference.time_per_ess / report.time_per_ess.
double relative_speed(const EssReport& report, const EssReport& reference);

// Row-wise argmax; ties go to the smallest class index.
Eigen::VectorXi argmax_labels(const Eigen::MatrixXd& probabilities);

// Fraction of rows whose argmax differs from the 0-based label.
double misclassification(const Eigen::MatrixXd& probabilities, const Eigen::VectorXi& labels);

struct RocCurve {
  std::vector<double> false_positive_rate;  // from 0 to 1
  std::vector<double> true_positive_rate;
  double auc = 0.0;
};

// Threshold sweep over the distinct scores (labels: 1 positive, 0 negative).
// The AUC is the trapezoid area, equal to the Mann-Whitney statistic with
// ties counted as one half.
RocCurve roc_auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

enum class PathEstimator { kMap, kGibbsMean, kGibbsMedian, kVbMean };

std::string to_string(PathEstimator estimator);
PathEstimator parse_path_estimator(const std::string& name);

struct PathConfig {
  double hyper_b = 1.0;
  EMConfig em;
  GibbsConfig gibbs;
  VBConfig vb;
};

struct PathPoint {
  double hyper_a = 0.0;
  Eigen::MatrixXd coefficients;  // normalized to unit total
  int zero_count = 0;
  std::vector<std::pair<int, int>> zero_pattern;
  std::optional<double> objective;  // MAP objective or converged bound
  bool failed = false;
  std::string error;
};

struct RegPath {
  PathEstimator estimator = PathEstimator::kMap;
  std::vector<PathPoint> points;

  // Long format: a,k,j,value,estimator with 1-based k and j.
  void write_csv(std::ostream& out) const;
};

// Fits the estimator at each grid value (strictly decreasing, positive).
// MAP and variational fits are warm-started from the previous grid point;
// Gibbs fits use a child stream per grid point. A failing grid point is
// recorded and the path continues.
RegPath regularization_path(const Design& design, const std::vector<double>& grid,
                            PathEstimator estimator, const PathConfig& config, RngStream& rng);

// a = 1.0, 0.9, ..., 0.1.
std::vector<double> default_path_grid();

enum class Method { kSparseLogit, kPLGibbs, kPLVar, kPLMap };

std::string to_string(Method method);
Method parse_method(const std::string& name);

struct BenchmarkDataset {
  std::string name;
  Dataset data;  // raw covariates; standardization is fitted per split
};

struct BenchmarkConfig {
  int replications = 20;
  double train_fraction = 2.0 / 3.0;
  std::string feature_map = "default";
  double hyper_a = 1.0;
  double hyper_b = 1.0;
  GibbsConfig gibbs;
  logit::Config logit;
  TypeTwoConfig type2;
  EMConfig em;
  int threads = 0;  // 0 means hardware concurrency
  bool compute_ess = true;

  void validate() const;
};

struct BenchmarkCell {
  std::size_t dataset = 0;
  Method method = Method::kPLGibbs;
  int replication = 0;
  double misclassification = 0.0;
  std::optional<EssReport> ess;
  bool failed = false;
  std::string error;
};

struct BenchmarkRow {
  std::string dataset;
  Method method = Method::kPLGibbs;
  int completed = 0;
  double mean_error = 0.0;
  double sd_error = 0.0;
  std::optional<double> time;
  std::optional<double> min_ess;
  std::optional<double> time_per_ess;
  std::optional<double> relative_speed;
};

struct DatasetSummary {
  std::string name;
  Eigen::Index covariates = 0;
  int classes = 0;
  Eigen::Index size = 0;
};

struct BenchmarkResult {
  std::vector<DatasetSummary> datasets;
  std::vector<Method> methods;
  std::vector<BenchmarkCell> cells;
  std::vector<BenchmarkRow> rows;

  // Dataset characteristics: name, d, K, n.
  std::string dataset_table() const;
  // Misclassification mean (sd), one row per dataset and one column per method.
  std::string error_table() const;
  // Time, min ESS, time/ESS and relative speed per dataset and sampler.
  std::string efficiency_table() const;
  void write_csv(std::ostream& out) const;
};

struct Split {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

// Per-class shuffle; round(fraction * n_k) observations of class k go to
// training, with at least one per class in each part when n_k >= 2.
Split stratified_split(const Eigen::VectorXi& labels, int num_classes, double train_fraction,
                       RngStream& rng);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows);

// Every (dataset, method, replication) cell runs on its own stream derived
// from master_seed; the split of a (dataset, replication) pair is shared by
// all methods. Results do not depend on the thread count.
BenchmarkResult benchmark(const std::vector<BenchmarkDataset>& datasets,
                          const std::vector<Method>& methods, const BenchmarkConfig& config,
                          std::uint64_t master_seed);

}  // namespace plr
