#include "plr/gibbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "plr/errors.hpp"

namespace plr {

void GibbsConfig::validate() const {
  if (burn_in < 0) throw Error(ErrorKind::kConfig, "burn_in must be non-negative");
  if (samples < 1) throw Error(ErrorKind::kConfig, "samples must be at least 1");
  if (thin < 1) throw Error(ErrorKind::kConfig, "thin must be at least 1");
  if (!(mh_step_scale >= 0.0)) throw Error(ErrorKind::kConfig, "mh_step_scale must be non-negative");
  if (!(a_lower > 0.0) || !(a_upper >= a_lower)) {
    throw Error(ErrorKind::kConfig, "hyperparameter bounds must satisfy 0 < lower <= upper");
  }
}

AugmentedState gibbs_sweep(GibbsState& state, const Design& design, double hyper_b,
                           RngStream& rng) {
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.features();
  const Eigen::Index K = design.num_classes;
  Eigen::MatrixXd& lambda = state.lambda;

  AugmentedState aug{Eigen::VectorXi(n), Eigen::VectorXd(n)};
  const Eigen::VectorXd column_mass = lambda.colwise().sum().transpose();
  std::vector<double> weights(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = design.labels(i);
    double norm = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      weights[static_cast<std::size_t>(j)] = design.W(i, j) * lambda(y, j);
      norm += weights[static_cast<std::size_t>(j)];
    }
    if (!(norm > 0.0)) {
      throw Error(ErrorKind::kInfeasibleState,
                  "feature posterior of observation " + std::to_string(i) + " has zero mass");
    }
    aug.feature(i) = static_cast<int>(sample_discrete(weights, rng));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    aug.arrival(i) = sample_exponential(design.W.row(i).dot(column_mass), rng);
  }

  const Eigen::MatrixXd counts = occupancy_counts(design, aug.feature);
  const Eigen::VectorXd exposure = design.W.transpose() * aug.arrival;
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) {
      lambda(k, j) = sample_gamma(state.hyper_a + counts(k, j), hyper_b + exposure(j), rng);
    }
  }
  return aug;
}

double hyper_a_log_target(double hyper_a, const Eigen::MatrixXd& lambda, double hyper_b,
                          double lower, double upper) {
  if (hyper_a < lower || hyper_a > upper) return -std::numeric_limits<double>::infinity();
  const double m = static_cast<double>(lambda.size());
  const double sum_log = lambda.array().log().sum();
  const double sum = lambda.sum();
  return m * (hyper_a * std::log(hyper_b) - std::lgamma(hyper_a)) + (hyper_a - 1.0) * sum_log -
         hyper_b * sum - std::log(hyper_a);
}

double mh_log_acceptance(double hyper_a, double proposed, const Eigen::MatrixXd& lambda,
                         double hyper_b, double lower, double upper) {
  const double target_new = hyper_a_log_target(proposed, lambda, hyper_b, lower, upper);
  if (!std::isfinite(target_new)) return -std::numeric_limits<double>::infinity();
  return target_new - hyper_a_log_target(hyper_a, lambda, hyper_b, lower, upper) +
         std::log(proposed) - std::log(hyper_a);
}

MHStep mh_update_a(double hyper_a, const Eigen::MatrixXd& lambda, double hyper_b, double scale,
                   RngStream& rng, double lower, double upper) {
  if (!(hyper_a > 0.0)) throw Error(ErrorKind::kInvalidParameter, "a must be positive");
  const double proposed = hyper_a * std::exp(scale * rng.normal());
  const double log_ratio = mh_log_acceptance(hyper_a, proposed, lambda, hyper_b, lower, upper);
  if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) return {proposed, true};
  return {hyper_a, false};
}

Eigen::MatrixXd rescale_total_mass(const Eigen::MatrixXd& lambda, double hyper_a,
                                   double hyper_b, RngStream& rng) {
  const double mass = lambda.sum();
  if (!(mass > 0.0)) throw Error(ErrorKind::kInvalidParameter, "total mass must be positive");
  const double fresh = sample_gamma(static_cast<double>(lambda.size()) * hyper_a, hyper_b, rng);
  return lambda * (fresh / mass);
}

double total_mass_map(Eigen::Index classes, Eigen::Index features, double hyper_a,
                      double hyper_b) {
  return (static_cast<double>(classes * features) * hyper_a - 1.0) / hyper_b;
}

Chain run_chain(const Design& design, double hyper_a, double hyper_b, const GibbsConfig& config,
                RngStream& rng) {
  config.validate();
  if (!(hyper_a > 0.0) || !(hyper_b > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "Gibbs sampling needs a > 0 and b > 0");
  }
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index K = design.num_classes;
  const Eigen::Index p = design.features();

  GibbsState state{Eigen::MatrixXd::Ones(K, p), hyper_a};
  Chain chain;
  chain.coef_rows = K;
  chain.coef_cols = p;
  chain.draws.resize(config.samples, K * p);
  chain.log_likelihood.resize(config.samples);
  if (config.sample_hyper_a) {
    chain.hyper.resize(config.samples);
    chain.hyper_name = "a";
  }

  double scale = config.mh_step_scale;
  long window_accepted = 0;
  long window_proposed = 0;
  const long total_sweeps = static_cast<long>(config.burn_in) +
                            static_cast<long>(config.samples) * config.thin;
  Eigen::Index stored = 0;
  for (long sweep = 0; sweep < total_sweeps; ++sweep) {
    gibbs_sweep(state, design, hyper_b, rng);
    const bool burning = sweep < config.burn_in;
    if (config.sample_hyper_a) {
      const MHStep step = mh_update_a(state.hyper_a, state.lambda, hyper_b, scale, rng,
                                      config.a_lower, config.a_upper);
      state.hyper_a = step.hyper_a;
      if (burning) {
        ++window_proposed;
        if (step.accepted) ++window_accepted;
        if (config.adapt_step && window_proposed == 50) {
          const double rate = static_cast<double>(window_accepted) / 50.0;
          if (rate < 0.30) scale *= 0.8;
          if (rate > 0.45) scale *= 1.25;
          window_accepted = 0;
          window_proposed = 0;
        }
      } else {
        ++chain.mh_proposed;
        if (step.accepted) ++chain.mh_accepted;
      }
    }
    if (config.rescale_lambda) state.lambda = rescale_total_mass(state.lambda, state.hyper_a, hyper_b, rng);

    if (burning) continue;
    const long after = sweep - config.burn_in;
    if ((after + 1) % config.thin != 0) continue;
    for (Eigen::Index k = 0; k < K; ++k) chain.draws.row(stored).segment(k * p, p) = state.lambda.row(k);
    chain.log_likelihood(stored) = log_likelihood(design, state.lambda);
    if (config.sample_hyper_a) chain.hyper(stored) = state.hyper_a;
    ++stored;
  }
  chain.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return chain;
}

Eigen::VectorXd posterior_predict(const Chain& chain, const Eigen::VectorXd& w) {
  if (chain.empty()) throw Error(ErrorKind::kEmptyChain, "cannot predict from an empty chain");
  Eigen::VectorXd average = Eigen::VectorXd::Zero(chain.coef_rows);
  for (Eigen::Index s = 0; s < chain.size(); ++s) average += class_probabilities(w, chain.draw(s));
  return average / static_cast<double>(chain.size());
}

Eigen::MatrixXd posterior_predict_rows(const Chain& chain, const Eigen::MatrixXd& W) {
  if (chain.empty()) throw Error(ErrorKind::kEmptyChain, "cannot predict from an empty chain");
  Eigen::MatrixXd average = Eigen::MatrixXd::Zero(W.rows(), chain.coef_rows);
  for (Eigen::Index s = 0; s < chain.size(); ++s) {
    const Eigen::MatrixXd scores = W * chain.draw(s).transpose();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const double total = scores.row(i).sum();
      if (!(total > 0.0)) throw Error(ErrorKind::kDegenerateWeights, "all class scores are zero");
      average.row(i) += scores.row(i) / total;
    }
  }
  return average / static_cast<double>(chain.size());
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

PosteriorSummary posterior_summaries(const Chain& chain, bool normalize) {
  if (chain.empty()) throw Error(ErrorKind::kEmptyChain, "cannot summarise an empty chain");
  const Eigen::MatrixXd draws = normalize ? chain.normalized_draws() : chain.draws;
  const Eigen::Index R = chain.coef_rows;
  const Eigen::Index C = chain.coef_cols;
  PosteriorSummary out{Eigen::MatrixXd(R, C), Eigen::MatrixXd(R, C), Eigen::MatrixXd(R, C),
                       Eigen::MatrixXd(R, C)};
  std::vector<double> column(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index c = 0; c < C; ++c) {
      const Eigen::Index idx = r * C + c;
      for (Eigen::Index s = 0; s < draws.rows(); ++s) column[static_cast<std::size_t>(s)] = draws(s, idx);
      out.mean(r, c) = draws.col(idx).mean();
      std::sort(column.begin(), column.end());
      out.median(r, c) = quantile_sorted(column, 0.5);
      out.lower(r, c) = quantile_sorted(column, 0.05);
      out.upper(r, c) = quantile_sorted(column, 0.95);
    }
  }
  return out;
}

}  // namespace plr
