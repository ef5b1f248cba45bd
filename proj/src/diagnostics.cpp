#include "plr/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "plr/errors.hpp"

namespace plr {

double ess(const Eigen::Ref<const Eigen::VectorXd>& draws) {
  const Eigen::Index n = draws.size();
  if (n < 10) {
    throw Error(ErrorKind::kInsufficientData,
                "effective sample size needs at least 10 draws, got " + std::to_string(n));
  }
  if (!draws.allFinite()) throw Error(ErrorKind::kDomain, "draws contain non-finite values");
  const Eigen::VectorXd centered = draws.array() - draws.mean();
  const double N = static_cast<double>(n);
  auto autocov = [&](Eigen::Index lag) {
    return centered.head(n - lag).dot(centered.tail(n - lag)) / N;
  };
  const double gamma0 = autocov(0);
  if (!(gamma0 > 0.0)) return 1.0;

  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; 2 * m + 1 < n; ++m) {
    double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, previous);
    sum += pair;
    previous = pair;
  }
  const double tau = -1.0 + 2.0 * sum / gamma0;
  return std::clamp(N / tau, 1.0, N);
}

EssReport min_ess_report(const Chain& chain, double wall_seconds, bool normalize,
                         const EssReport* reference) {
  if (chain.empty()) throw Error(ErrorKind::kEmptyChain, "cannot compute ESS of an empty chain");
  const Eigen::MatrixXd draws = normalize ? chain.normalized_draws() : chain.draws;
  EssReport report;
  report.per_coordinate.resize(draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) report.per_coordinate(c) = ess(draws.col(c));
  report.min_ess = report.per_coordinate.minCoeff(&report.argmin);
  report.wall_seconds = wall_seconds;
  report.time_per_ess = wall_seconds / report.min_ess;
  if (reference != nullptr) report.relative_speed = relative_speed(report, *reference);
  return report;
}

double relative_speed(const EssReport& report, const EssReport& reference) {
  if (!(report.time_per_ess > 0.0)) {
    throw Error(ErrorKind::kUndefinedMetric, "relative speed needs a positive time per ESS");
  }
  return reference.time_per_ess / report.time_per_ess;
}

Eigen::VectorXi argmax_labels(const Eigen::MatrixXd& probabilities) {
  Eigen::VectorXi out(probabilities.rows());
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probabilities.cols(); ++k) {
      if (probabilities(i, k) > probabilities(i, best)) best = k;
    }
    out(i) = static_cast<int>(best);
  }
  return out;
}

double misclassification(const Eigen::MatrixXd& probabilities, const Eigen::VectorXi& labels) {
  if (probabilities.rows() != labels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "prediction rows do not match the label count");
  }
  if (labels.size() == 0) throw Error(ErrorKind::kInsufficientData, "no predictions to score");
  if ((labels.array() < 0).any() || (labels.array() >= probabilities.cols()).any()) {
    throw Error(ErrorKind::kShapeMismatch, "label outside the predicted classes");
  }
  const Eigen::VectorXi predicted = argmax_labels(probabilities);
  return static_cast<double>((predicted.array() != labels.array()).count()) /
         static_cast<double>(labels.size());
}

RocCurve roc_auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::kShapeMismatch, "scores and labels differ in length");
  if (!scores.allFinite()) throw Error(ErrorKind::kDomain, "scores contain non-finite values");
  long positives = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0 && labels(i) != 1) throw Error(ErrorKind::kDomain, "ROC labels must be 0 or 1");
    positives += labels(i);
  }
  const long negatives = static_cast<long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::kUndefinedMetric, "ROC needs both classes present");
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index l, Eigen::Index r) { return scores(l) > scores(r); });

  RocCurve curve;
  curve.false_positive_rate.push_back(0.0);
  curve.true_positive_rate.push_back(0.0);
  long tp = 0;
  long fp = 0;
  long twice_area = 0;  // in units of 1 / (positives * negatives)
  for (std::size_t s = 0; s < order.size();) {
    long group_tp = 0;
    long group_fp = 0;
    const double threshold = scores(order[s]);
    while (s < order.size() && scores(order[s]) == threshold) {
      (labels(order[s]) == 1 ? group_tp : group_fp) += 1;
      ++s;
    }
    twice_area += group_fp * (2 * tp + group_tp);
    tp += group_tp;
    fp += group_fp;
    curve.false_positive_rate.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
    curve.true_positive_rate.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  curve.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

std::string to_string(PathEstimator estimator) {
  switch (estimator) {
    case PathEstimator::kMap: return "map";
    case PathEstimator::kGibbsMean: return "gibbs-mean";
    case PathEstimator::kGibbsMedian: return "gibbs-median";
    case PathEstimator::kVbMean: return "vb-mean";
  }
  return "unknown";
}

PathEstimator parse_path_estimator(const std::string& name) {
  for (PathEstimator e : {PathEstimator::kMap, PathEstimator::kGibbsMean, PathEstimator::kGibbsMedian,
                          PathEstimator::kVbMean}) {
    if (to_string(e) == name) return e;
  }
  throw Error(ErrorKind::kConfig, "unknown path estimator '" + name +
                                      "' (expected map, gibbs-mean, gibbs-median or vb-mean)");
}

void RegPath::write_csv(std::ostream& out) const {
  out << "a,k,j,value,estimator\n";
  const std::string tag = to_string(estimator);
  char buffer[64];
  for (const PathPoint& point : points) {
    if (point.failed) continue;
    for (Eigen::Index k = 0; k < point.coefficients.rows(); ++k) {
      for (Eigen::Index j = 0; j < point.coefficients.cols(); ++j) {
        std::snprintf(buffer, sizeof buffer, "%.17g", point.hyper_a);
        out << buffer << ',' << k + 1 << ',' << j + 1 << ',';
        std::snprintf(buffer, sizeof buffer, "%.17g", point.coefficients(k, j));
        out << buffer << ',' << tag << '\n';
      }
    }
  }
}

namespace {

void record_coefficients(PathPoint& point, const Eigen::MatrixXd& lambda) {
  point.coefficients = lambda / lambda.sum();
  point.zero_count = 0;
  point.zero_pattern.clear();
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
      if (lambda(k, j) == 0.0) {
        ++point.zero_count;
        point.zero_pattern.emplace_back(static_cast<int>(k), static_cast<int>(j));
      }
    }
  }
}

}  // namespace

std::vector<double> default_path_grid() {
  std::vector<double> grid;
  for (int step = 10; step >= 1; --step) grid.push_back(step / 10.0);
  return grid;
}

RegPath regularization_path(const Design& design, const std::vector<double>& grid,
                            PathEstimator estimator, const PathConfig& config, RngStream& rng) {
  if (grid.empty()) throw Error(ErrorKind::kInvalidParameter, "regularization grid is empty");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] > 0.0)) throw Error(ErrorKind::kInvalidParameter, "grid values must be positive");
    if (g > 0 && !(grid[g] < grid[g - 1])) {
      throw Error(ErrorKind::kInvalidParameter, "grid must be strictly decreasing");
    }
  }
  RegPath path;
  path.estimator = estimator;
  std::optional<Eigen::MatrixXd> warm_map;
  std::optional<VariationalState> warm_vb;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    PathPoint point;
    point.hyper_a = grid[g];
    try {
      switch (estimator) {
        case PathEstimator::kMap: {
          const EMTrace trace =
              warm_map ? fit_map_from(design, *warm_map, grid[g], config.hyper_b, config.em)
                       : fit_map(design, grid[g], config.hyper_b, config.em, rng);
          record_coefficients(point, trace.lambda);
          point.objective = trace.objective.back();
          warm_map = trace.lambda * (static_cast<double>(trace.lambda.size()) / trace.lambda.sum());
          break;
        }
        case PathEstimator::kVbMean: {
          VariationalState state = warm_vb ? fit_vb_from(*warm_vb, design, grid[g], config.hyper_b, config.vb)
                                           : fit_vb(design, grid[g], config.hyper_b, config.vb);
          record_coefficients(point, state.mean_lambda());
          point.objective = state.elbo_trace.back();
          warm_vb = std::move(state);
          break;
        }
        case PathEstimator::kGibbsMean:
        case PathEstimator::kGibbsMedian: {
          RngStream child = rng.split(g);
          const Chain chain = run_chain(design, grid[g], config.hyper_b, config.gibbs, child);
          const PosteriorSummary summary = posterior_summaries(chain, true);
          record_coefficients(point, estimator == PathEstimator::kGibbsMean ? summary.mean : summary.median);
          break;
        }
      }
    } catch (const Error& error) {
      point.failed = true;
      point.error = std::string(to_string(error.kind())) + ": " + error.what();
    }
    path.points.push_back(std::move(point));
  }
  return path;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kSparseLogit: return "sparse-logit";
    case Method::kPLGibbs: return "pl-gibbs";
    case Method::kPLVar: return "pl-var";
    case Method::kPLMap: return "pl-map";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kSparseLogit, Method::kPLGibbs, Method::kPLVar, Method::kPLMap}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::kConfig,
              "unknown method '" + name + "' (expected sparse-logit, pl-gibbs, pl-var or pl-map)");
}

void BenchmarkConfig::validate() const {
  if (replications < 1) throw Error(ErrorKind::kConfig, "replications must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::kConfig, "train fraction must lie in (0, 1)");
  }
  if (!(hyper_a > 0.0) || !(hyper_b > 0.0)) throw Error(ErrorKind::kConfig, "benchmark needs a > 0 and b > 0");
  if (threads < 0) throw Error(ErrorKind::kConfig, "threads must be non-negative");
  gibbs.validate();
  logit.validate();
  em.validate();
}

Split stratified_split(const Eigen::VectorXi& labels, int num_classes, double train_fraction,
                       RngStream& rng) {
  Split split;
  for (int k = 0; k < num_classes; ++k) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels(i) == k) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto count = static_cast<std::ptrdiff_t>(members.size());
    auto take = static_cast<std::ptrdiff_t>(std::llround(train_fraction * static_cast<double>(count)));
    if (count >= 2) take = std::clamp<std::ptrdiff_t>(take, 1, count - 1);
    split.train.insert(split.train.end(), members.begin(), members.begin() + take);
    split.test.insert(split.test.end(), members.begin() + take, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) throw Error(ErrorKind::kInsufficientData, "standardization needs at least two rows");
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(X.rows() - 1);
    s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) throw Error(ErrorKind::kShapeMismatch, "column count differs from the fitted statistics");
  return ((X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

Dataset subset(const Dataset& data, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.covariates());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = data.X.row(rows[r]);
    out.labels(static_cast<Eigen::Index>(r)) = data.labels(rows[r]);
  }
  out.num_classes = data.num_classes;
  return out;
}

namespace {

struct PreparedSplit {
  Dataset train;
  Dataset test;
};

bool is_sampler(Method method) { return method == Method::kPLGibbs || method == Method::kSparseLogit; }

void run_cell(BenchmarkCell& cell, const PreparedSplit& split, const BenchmarkConfig& config,
              RngStream& rng) {
  switch (cell.method) {
    case Method::kPLGibbs: {
      const FeatureMap map = FeatureMap::parse(config.feature_map, static_cast<int>(split.train.covariates()));
      const Design design = make_design(split.train, map);
      const Chain chain = run_chain(design, config.hyper_a, config.hyper_b, config.gibbs, rng);
      const Eigen::MatrixXd probs = posterior_predict_rows(chain, transform_rows(split.test.X, map));
      cell.misclassification = misclassification(probs, split.test.labels);
      if (config.compute_ess) cell.ess = min_ess_report(chain, chain.wall_seconds, true);
      break;
    }
    case Method::kSparseLogit: {
      const logit::Design design = logit::make_design(split.train, config.logit.intercept);
      const Chain chain = run_logit_chain(design, config.logit, rng);
      const Eigen::MatrixXd probs = logit_predict_rows(chain, split.test.X, config.logit.intercept);
      cell.misclassification = misclassification(probs, split.test.labels);
      if (config.compute_ess) cell.ess = min_ess_report(chain, chain.wall_seconds, false);
      break;
    }
    case Method::kPLVar: {
      const FeatureMap map = FeatureMap::parse(config.feature_map, static_cast<int>(split.train.covariates()));
      const Design design = make_design(split.train, map);
      const TypeTwoResult fit = type2_ml_a(design, config.hyper_b, config.type2);
      const Eigen::MatrixXd probs = vb_predict_rows(fit.state, transform_rows(split.test.X, map));
      cell.misclassification = misclassification(probs, split.test.labels);
      break;
    }
    case Method::kPLMap: {
      const FeatureMap map = FeatureMap::parse(config.feature_map, static_cast<int>(split.train.covariates()));
      const Design design = make_design(split.train, map);
      const EMTrace trace = fit_map(design, config.hyper_a, config.hyper_b, config.em, rng);
      const Eigen::MatrixXd W = transform_rows(split.test.X, map);
      Eigen::MatrixXd probs(W.rows(), design.num_classes);
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        probs.row(i) = class_probabilities(W.row(i).transpose(), trace.lambda).transpose();
      }
      cell.misclassification = misclassification(probs, split.test.labels);
      break;
    }
  }
}

std::string format_fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, value);
  return buffer;
}

std::string format_error(double value) {
  // .238 style: leading zero dropped for values below one.
  std::string s = format_fixed(value, 3);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return s;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string optional_number(const std::optional<double>& value, int digits) {
  return value ? format_fixed(*value, digits) : "";
}

}  // namespace

BenchmarkResult benchmark(const std::vector<BenchmarkDataset>& datasets,
                          const std::vector<Method>& methods, const BenchmarkConfig& config,
                          std::uint64_t master_seed) {
  config.validate();
  if (datasets.empty() || methods.empty()) {
    throw Error(ErrorKind::kInvalidParameter, "benchmark needs at least one dataset and one method");
  }
  BenchmarkResult result;
  result.methods = methods;
  for (const BenchmarkDataset& d : datasets) {
    result.datasets.push_back({d.name, d.data.covariates(), d.data.num_classes, d.data.size()});
  }

  const RngStream split_root(master_seed, 1);
  const RngStream cell_root(master_seed, 2);
  std::vector<std::vector<PreparedSplit>> splits(datasets.size());
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (int rep = 0; rep < config.replications; ++rep) {
      RngStream rng = split_root.split((static_cast<std::uint64_t>(d) << 32) | static_cast<std::uint64_t>(rep));
      const Split split = stratified_split(datasets[d].data.labels, datasets[d].data.num_classes,
                                           config.train_fraction, rng);
      PreparedSplit prepared{subset(datasets[d].data, split.train), subset(datasets[d].data, split.test)};
      const Standardizer standardizer = Standardizer::fit(prepared.train.X);
      prepared.train.X = standardizer.apply(prepared.train.X);
      prepared.test.X = standardizer.apply(prepared.test.X);
      splits[d].push_back(std::move(prepared));
    }
  }

  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (Method m : methods) {
      for (int rep = 0; rep < config.replications; ++rep) {
        BenchmarkCell cell;
        cell.dataset = d;
        cell.method = m;
        cell.replication = rep;
        result.cells.push_back(std::move(cell));
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < result.cells.size(); c = next++) {
      BenchmarkCell& cell = result.cells[c];
      const std::uint64_t id = (static_cast<std::uint64_t>(cell.dataset) << 40) |
                               (static_cast<std::uint64_t>(cell.method) << 32) |
                               static_cast<std::uint64_t>(cell.replication);
      RngStream rng = cell_root.split(id);
      try {
        run_cell(cell, splits[cell.dataset][static_cast<std::size_t>(cell.replication)], config, rng);
      } catch (const Error& error) {
        cell.failed = true;
        cell.error = std::string(to_string(error.kind())) + ": " + error.what();
      }
    }
  };
  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(result.cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const std::size_t first = result.rows.size();
    for (Method m : methods) {
      BenchmarkRow row;
      row.dataset = datasets[d].name;
      row.method = m;
      std::vector<double> errors;
      double time = 0.0;
      double min_ess = 0.0;
      int with_ess = 0;
      for (const BenchmarkCell& cell : result.cells) {
        if (cell.dataset != d || cell.method != m || cell.failed) continue;
        errors.push_back(cell.misclassification);
        if (cell.ess) {
          time += cell.ess->wall_seconds;
          min_ess += cell.ess->min_ess;
          ++with_ess;
        }
      }
      row.completed = static_cast<int>(errors.size());
      if (!errors.empty()) {
        const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
        double ss = 0.0;
        for (double e : errors) ss += (e - mean) * (e - mean);
        row.mean_error = mean;
        row.sd_error = errors.size() > 1 ? std::sqrt(ss / static_cast<double>(errors.size() - 1)) : 0.0;
      }
      if (with_ess > 0) {
        row.time = time / with_ess;
        row.min_ess = min_ess / with_ess;
        row.time_per_ess = *row.time / *row.min_ess;
      }
      result.rows.push_back(row);
    }
    double slowest = 0.0;
    for (std::size_t r = first; r < result.rows.size(); ++r) {
      if (result.rows[r].time_per_ess) slowest = std::max(slowest, *result.rows[r].time_per_ess);
    }
    for (std::size_t r = first; r < result.rows.size(); ++r) {
      if (result.rows[r].time_per_ess && *result.rows[r].time_per_ess > 0.0) {
        result.rows[r].relative_speed = slowest / *result.rows[r].time_per_ess;
      }
    }
  }
  return result;
}

std::string BenchmarkResult::dataset_table() const {
  std::ostringstream out;
  out << pad("Name", 16) << pad("d", 6) << pad("K", 6) << "n\n";
  for (const DatasetSummary& d : datasets) {
    out << pad(d.name, 16) << pad(std::to_string(d.covariates), 6) << pad(std::to_string(d.classes), 6)
        << d.size << '\n';
  }
  return out.str();
}

std::string BenchmarkResult::error_table() const {
  std::ostringstream out;
  out << pad("Dataset", 16);
  for (Method m : methods) out << pad(to_string(m), 18);
  out << '\n';
  for (const DatasetSummary& d : datasets) {
    out << pad(d.name, 16);
    for (Method m : methods) {
      for (const BenchmarkRow& row : rows) {
        if (row.dataset != d.name || row.method != m) continue;
        const std::string cell = row.completed > 0 ? format_error(row.mean_error) + " (" + format_error(row.sd_error) + ")" : "failed";
        out << pad(cell, 18);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string BenchmarkResult::efficiency_table() const {
  std::ostringstream out;
  out << pad("Dataset", 16) << pad("Method", 16) << pad("Time", 12) << pad("ESS", 12) << pad("Time/ESS", 12)
      << "Relat. Speed\n";
  for (const DatasetSummary& d : datasets) {
    bool first = true;
    for (const BenchmarkRow& row : rows) {
      if (row.dataset != d.name || !is_sampler(row.method) || !row.time_per_ess) continue;
      out << pad(first ? d.name : "", 16) << pad(to_string(row.method), 16) << pad(format_fixed(*row.time, 1), 12)
          << pad(format_fixed(*row.min_ess, 0), 12) << pad(format_fixed(*row.time_per_ess, 3), 12)
          << format_fixed(*row.relative_speed, 0) << '\n';
      first = false;
    }
  }
  return out.str();
}

void BenchmarkResult::write_csv(std::ostream& out) const {
  out << "dataset,method,completed,mean_error,sd_error,time,min_ess,time_per_ess,relative_speed\n";
  for (const BenchmarkRow& row : rows) {
    out << row.dataset << ',' << to_string(row.method) << ',' << row.completed << ','
        << format_fixed(row.mean_error, 6) << ',' << format_fixed(row.sd_error, 6) << ','
        << optional_number(row.time, 6) << ',' << optional_number(row.min_ess, 3) << ','
        << optional_number(row.time_per_ess, 6) << ',' << optional_number(row.relative_speed, 3) << '\n';
  }
}

}  // namespace plr
