#include "plr/model.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <thread>

namespace plr {

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts[static_cast<std::size_t>(labels(i))];
  return counts;
}

std::vector<int> Dataset::empty_classes() const {
  std::vector<int> empty;
  const auto counts = class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) empty.push_back(static_cast<int>(k));
  }
  return empty;
}

Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXi labels, int num_classes) {
  if (X.rows() != labels.size()) {
    throw Error(ErrorKind::kShapeMismatch, "covariate rows and labels differ in length");
  }
  if (X.rows() == 0 || num_classes < 1) {
    throw Error(ErrorKind::kInvalidParameter, "dataset needs at least one row and one class");
  }
  if (!X.allFinite()) {
    throw Error(ErrorKind::kInvalidParameter, "covariates contain non-finite entries");
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= num_classes) {
      throw Error(ErrorKind::kInvalidParameter,
                  "label of observation " + std::to_string(i) + " is outside the class range");
    }
  }
  return Dataset{std::move(X), std::move(labels), num_classes};
}

FeatureMap::FeatureMap(std::vector<Transform> transforms) {
  for (const auto& t : transforms) add(t);
}

FeatureMap FeatureMap::default_map(int covariates) {
  FeatureMap map;
  for (int j = 0; j < covariates; ++j) map.add({TransformKind::kPositiveExp, j, -1});
  for (int j = 0; j < covariates; ++j) map.add({TransformKind::kNegativeExp, j, -1});
  map.add({TransformKind::kOffset, -1, -1});
  return map;
}

FeatureMap& FeatureMap::add(Transform transform) {
  const bool needs_first = transform.kind != TransformKind::kOffset;
  const bool needs_second = transform.kind == TransformKind::kPairPositive ||
                            transform.kind == TransformKind::kPairNegative;
  if ((needs_first && transform.first < 0) || (needs_second && transform.second < 0)) {
    throw Error(ErrorKind::kInvalidParameter, "transform is missing a covariate index");
  }
  if (!needs_first) transform.first = -1;
  if (!needs_second) transform.second = -1;
  transforms_.push_back(transform);
  return *this;
}

int FeatureMap::required_covariates() const {
  int needed = 0;
  for (const auto& t : transforms_) needed = std::max({needed, t.first + 1, t.second + 1});
  return needed;
}

std::string describe(const Transform& t) {
  switch (t.kind) {
    case TransformKind::kPositiveExp: return "exp:" + std::to_string(t.first);
    case TransformKind::kNegativeExp: return "negexp:" + std::to_string(t.first);
    case TransformKind::kOffset: return "offset";
    case TransformKind::kPairPositive:
      return "pair:" + std::to_string(t.first) + ":" + std::to_string(t.second);
    case TransformKind::kPairNegative:
      return "negpair:" + std::to_string(t.first) + ":" + std::to_string(t.second);
  }
  return "?";
}

std::string FeatureMap::to_spec() const {
  std::string out;
  for (const auto& t : transforms_) {
    if (!out.empty()) out += ',';
    out += describe(t);
  }
  return out;
}

namespace {

int parse_index(std::string_view text, std::string_view token) {
  int value = -1;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 0) {
    throw Error(ErrorKind::kConfig, "bad covariate index in feature token '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

FeatureMap FeatureMap::parse(std::string_view spec, int covariates) {
  FeatureMap map;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    std::string_view token = spec.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    start = end + 1;
    if (token.empty()) continue;

    std::vector<std::string_view> parts;
    std::size_t p = 0;
    while (p <= token.size()) {
      std::size_t q = token.find(':', p);
      if (q == std::string_view::npos) q = token.size();
      parts.push_back(token.substr(p, q - p));
      p = q + 1;
    }
    const std::string_view head = parts.front();
    if (head == "default" && parts.size() == 1) {
      const FeatureMap defaults = default_map(covariates);
      for (const auto& t : defaults.transforms()) map.add(t);
    } else if (head == "offset" && parts.size() == 1) {
      map.add({TransformKind::kOffset, -1, -1});
    } else if ((head == "exp" || head == "negexp") && parts.size() == 2) {
      map.add({head == "exp" ? TransformKind::kPositiveExp : TransformKind::kNegativeExp,
               parse_index(parts[1], token), -1});
    } else if ((head == "pair" || head == "negpair") && parts.size() == 3) {
      map.add({head == "pair" ? TransformKind::kPairPositive : TransformKind::kPairNegative,
               parse_index(parts[1], token), parse_index(parts[2], token)});
    } else {
      throw Error(ErrorKind::kConfig, "unknown feature token '" + std::string(token) + "'");
    }
  }
  if (map.dimension() == 0) throw Error(ErrorKind::kConfig, "feature map is empty");
  if (map.required_covariates() > covariates) {
    throw Error(ErrorKind::kConfig, "feature map refers to covariate " +
                                        std::to_string(map.required_covariates() - 1) +
                                        " but the data has " + std::to_string(covariates));
  }
  return map;
}

Design make_design(const Dataset& data, const FeatureMap& map) {
  return Design{transform_rows(data.X, map), data.labels, data.num_classes};
}

Eigen::VectorXd race_oracle(const Eigen::VectorXd& w, const Eigen::MatrixXd& lambda, long draws,
                            RngStream& rng, int threads) {
  if (draws < 1) throw Error(ErrorKind::kInvalidParameter, "race needs at least one draw");
  if (w.size() != lambda.cols()) throw Error(ErrorKind::kShapeMismatch, "feature length mismatch");
  const Eigen::MatrixXd rates = lambda.array().rowwise() * w.transpose().array();
  if (!((rates.array() > 0.0).any())) {
    throw Error(ErrorKind::kDegenerateWeights, "all class scores are zero");
  }
  const int K = static_cast<int>(lambda.rows());
  const int p = static_cast<int>(lambda.cols());

  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<long>(threads, draws));
  std::vector<std::vector<long>> wins(static_cast<std::size_t>(threads), std::vector<long>(K, 0));
  const std::uint64_t base_seed = rng();
  std::vector<RngStream> streams;
  for (int t = 0; t < threads; ++t) streams.emplace_back(base_seed, static_cast<std::uint64_t>(t));

  auto worker = [&](int t) {
    const long begin = draws * t / threads;
    const long end = draws * (t + 1) / threads;
    RngStream& local = streams[static_cast<std::size_t>(t)];
    auto& tally = wins[static_cast<std::size_t>(t)];
    for (long r = begin; r < end; ++r) {
      double best = std::numeric_limits<double>::infinity();
      int winner = -1;
      for (int k = 0; k < K; ++k) {
        for (int j = 0; j < p; ++j) {
          const double rate = rates(k, j);
          if (!(rate > 0.0)) continue;
          const double arrival = sample_exponential(rate, local);
          if (arrival < best) {
            best = arrival;
            winner = k;
          }
        }
      }
      ++tally[static_cast<std::size_t>(winner)];
    }
  };

  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  for (auto& th : pool) th.join();

  Eigen::VectorXd freq = Eigen::VectorXd::Zero(K);
  for (const auto& tally : wins) {
    for (int k = 0; k < K; ++k) freq(k) += static_cast<double>(tally[static_cast<std::size_t>(k)]);
  }
  return freq / static_cast<double>(draws);
}

double log_likelihood(const Design& design, const Eigen::MatrixXd& lambda) {
  const Eigen::MatrixXd scores = design.W * lambda.transpose();  // n x K
  double total = 0.0;
  for (Eigen::Index i = 0; i < design.size(); ++i) {
    const double own = scores(i, design.labels(i));
    if (!(own > 0.0)) return -std::numeric_limits<double>::infinity();
    total += std::log(own) - std::log(scores.row(i).sum());
  }
  return total;
}

Eigen::MatrixXd occupancy_counts(const Design& design, const Eigen::VectorXi& feature) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(design.num_classes, design.features());
  for (Eigen::Index i = 0; i < design.size(); ++i) counts(design.labels(i), feature(i)) += 1.0;
  return counts;
}

double log_complete_likelihood(const Design& design, const Eigen::MatrixXd& lambda,
                               const AugmentedState& aug) {
  if (aug.feature.size() != design.size() || aug.arrival.size() != design.size()) {
    throw Error(ErrorKind::kShapeMismatch, "augmented state does not match the data");
  }
  for (Eigen::Index i = 0; i < design.size(); ++i) {
    if (aug.feature(i) < 0 || aug.feature(i) >= design.features() || !(aug.arrival(i) > 0.0)) {
      throw Error(ErrorKind::kInvalidParameter,
                  "augmented state of observation " + std::to_string(i) + " is out of range");
    }
  }
  const Eigen::MatrixXd counts = occupancy_counts(design, aug.feature);
  const Eigen::VectorXd exposure = design.W.transpose() * aug.arrival;  // sum_i Z_i W_ij

  double total = 0.0;
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
      const double n = counts(k, j);
      const double l = lambda(k, j);
      if (n > 0.0) {
        if (!(l > 0.0)) return -std::numeric_limits<double>::infinity();
        total += n * std::log(l);
      }
      total -= l * exposure(j);
    }
  }
  for (Eigen::Index i = 0; i < design.size(); ++i) total += std::log(design.W(i, aug.feature(i)));
  return total;
}

}  // namespace plr
