#include "plr/sparse_logit.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

#include "plr/errors.hpp"

namespace plr {

namespace logit {

void Config::validate() const {
  if (burn_in < 0) throw Error(ErrorKind::kConfig, "burn_in must be non-negative");
  if (samples < 1) throw Error(ErrorKind::kConfig, "samples must be at least 1");
  if (thin < 1) throw Error(ErrorKind::kConfig, "thin must be at least 1");
  if (!(hyper_c > 0.0) || !(hyper_d > 0.0)) {
    throw Error(ErrorKind::kConfig, "theta prior needs c > 0 and d > 0 (the 1/theta prior is improper)");
  }
  if (!(intercept_variance > 0.0)) throw Error(ErrorKind::kConfig, "intercept_variance must be positive");
  if (fixed_theta && !(*fixed_theta > 0.0)) throw Error(ErrorKind::kConfig, "fixed theta must be positive");
  if (max_rejections < 1) throw Error(ErrorKind::kConfig, "max_rejections must be at least 1");
}

Design make_design(const Dataset& data, bool intercept) {
  if (data.num_classes < 2) throw Error(ErrorKind::kInvalidParameter, "logit needs at least two classes");
  Design design;
  design.labels = data.labels;
  design.num_classes = data.num_classes;
  if (intercept) {
    design.X.resize(data.size(), data.covariates() + 1);
    design.X.leftCols(data.covariates()) = data.X;
    design.X.col(data.covariates()).setOnes();
    design.intercept_column = data.covariates();
  } else {
    design.X = data.X;
  }
  return design;
}

State initial_state(const Design& design, const Config& config) {
  const Eigen::Index rows = design.num_classes - 1;
  State state;
  state.beta = Eigen::MatrixXd::Zero(rows, design.coefficients());
  state.tau = Eigen::MatrixXd::Ones(rows, design.coefficients());
  if (design.intercept_column >= 0 && !config.shrink_intercept) {
    state.tau.col(design.intercept_column).setConstant(config.intercept_variance);
  }
  state.theta = config.fixed_theta.value_or(1.0);
  state.latent = Eigen::MatrixXd::Zero(design.size(), rows);
  state.mixing = Eigen::MatrixXd::Ones(design.size(), rows);
  return state;
}

}  // namespace logit

Eigen::VectorXd logit_probabilities(const Eigen::VectorXd& x, const Eigen::MatrixXd& beta) {
  const Eigen::Index K = beta.rows() + 1;
  Eigen::VectorXd scores(K);
  scores.head(K - 1) = beta * x;
  scores(K - 1) = 0.0;
  if (!scores.allFinite()) throw Error(ErrorKind::kNumeric, "non-finite logit score");
  const double top = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - top).exp();
  return e / e.sum();
}

namespace {

// log(1 + exp(x)) without overflow.
double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

bool accept_right_tail(double u, double v) {
  double z = 1.0;
  const double x = std::exp(-0.5 * v);
  for (int j = 0;;) {
    ++j;
    double term = (j + 1.0) * (j + 1.0);
    z -= term * std::pow(x, term - 1.0);
    if (z > u) return true;
    ++j;
    term = (j + 1.0) * (j + 1.0);
    z += term * std::pow(x, term - 1.0);
    if (z < u) return false;
  }
}

bool accept_left_tail(double u, double v) {
  constexpr double pi = std::numbers::pi;
  const double h = 0.5 * std::log(2.0) + 2.5 * std::log(pi) - 2.5 * std::log(v) -
                   pi * pi / (2.0 * v) + 0.5 * v;
  const double log_u = std::log(u);
  double z = 1.0;
  const double x = std::exp(-pi * pi / (2.0 * v));
  const double k = v / (pi * pi);
  for (int j = 0;;) {
    ++j;
    z -= k * std::pow(x, static_cast<double>(j) * j - 1.0);
    if (h + std::log(z) > log_u) return true;
    ++j;
    const double term = (j + 1.0) * (j + 1.0);
    z += term * std::pow(x, term - 1.0);
    if (h + std::log(z) < log_u) return false;
  }
}

}  // namespace

double sample_truncated_logistic(double mean, bool positive, RngStream& rng) {
  if (!positive) return -sample_truncated_logistic(-mean, true, rng);
  // e = z - mean must exceed -mean, an event of probability sigma(mean). The
  // survival function of e is drawn uniformly on (0, sigma(mean)).
  const double log_sigma = -log1p_exp(-mean);
  const double log_tail = std::log(rng.uniform()) + log_sigma;
  const double tail = std::exp(log_tail);
  const double e = std::log1p(-tail) - log_tail;
  return std::max(mean + e, std::numeric_limits<double>::min());
}

double sample_logistic_mixing_variance(double residual, RngStream& rng, int max_rejections) {
  const double r = std::max(std::abs(residual), 1e-10);
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    // Proposal from the generalised inverse Gaussian GIG(1/2, 1, r^2).
    double y = rng.normal();
    y = y * y;
    y = 1.0 + (y - std::sqrt(y * (4.0 * r + y))) / (2.0 * r);
    const double v = rng.uniform() <= 1.0 / (1.0 + y) ? r / y : r * y;
    const double u = rng.uniform();
    const bool ok = v > 4.0 / 3.0 ? accept_right_tail(u, v) : accept_left_tail(u, v);
    if (ok) return v;
  }
  throw Error(ErrorKind::kSamplerStall, "mixing-variance sampler exceeded " +
                                            std::to_string(max_rejections) +
                                            " proposals for residual " + std::to_string(residual));
}

double update_tau(double beta, double laplace_rate, RngStream& rng) {
  if (!(laplace_rate > 0.0)) throw Error(ErrorKind::kInvalidParameter, "Laplace rate must be positive");
  const double magnitude = std::max(std::abs(beta), 1e-10);
  const double precision = sample_inverse_gaussian(std::sqrt(laplace_rate * laplace_rate / (magnitude * magnitude)),
                                                   laplace_rate * laplace_rate, rng);
  return 1.0 / precision;
}

double update_theta(const Eigen::MatrixXd& tau, double hyper_c, double hyper_d, RngStream& rng) {
  if ((tau.array() <= 0.0).any()) throw Error(ErrorKind::kInvalidParameter, "tau must be positive");
  return sample_gamma(static_cast<double>(tau.size()) + hyper_c, tau.sum() / 2.0 + hyper_d, rng);
}

void update_beta_block(int k, logit::State& state, const logit::Design& design,
                       const logit::Config& config, RngStream& rng) {
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.coefficients();
  const Eigen::Index rows = design.num_classes - 1;
  if (k < 0 || k >= rows) throw Error(ErrorKind::kInvalidParameter, "class block out of range");

  const Eigen::VectorXd prior_precision = state.tau.row(k).transpose().cwiseInverse();
  if (!config.likelihood_enabled) {
    for (Eigen::Index j = 0; j < p; ++j) state.beta(k, j) = rng.normal() / std::sqrt(prior_precision(j));
    return;
  }

  const Eigen::MatrixXd scores = design.X * state.beta.transpose();  // n x (K - 1)
  Eigen::VectorXd offset(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // log(1 + sum_{l != k} exp(score_il)), the reference class contributing exp(0).
    double top = 0.0;
    for (Eigen::Index l = 0; l < rows; ++l) {
      if (l != k) top = std::max(top, scores(i, l));
    }
    double sum = std::exp(-top);
    for (Eigen::Index l = 0; l < rows; ++l) {
      if (l != k) sum += std::exp(scores(i, l) - top);
    }
    offset(i) = top + std::log(sum);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = scores(i, k) - offset(i);
    const double z = sample_truncated_logistic(mean, design.labels(i) == k, rng);
    state.latent(i, k) = z;
    state.mixing(i, k) = sample_logistic_mixing_variance(z - mean, rng, config.max_rejections);
  }

  const Eigen::VectorXd weight = state.mixing.col(k).cwiseInverse();
  Eigen::MatrixXd precision = design.X.transpose() * weight.asDiagonal() * design.X;
  precision.diagonal() += prior_precision;
  const Eigen::VectorXd rhs =
      design.X.transpose() * (weight.array() * (state.latent.col(k) + offset).array()).matrix();
  const Eigen::LLT<Eigen::MatrixXd> chol(precision);
  if (chol.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumeric, "posterior precision of class block " + std::to_string(k + 1) +
                                         " is not positive definite");
  }
  Eigen::VectorXd noise(p);
  for (Eigen::Index j = 0; j < p; ++j) noise(j) = rng.normal();
  const Eigen::VectorXd mean = chol.solve(rhs);
  state.beta.row(k) = (mean + chol.matrixU().solve(noise)).transpose();
}

Chain run_logit_chain(const logit::Design& design, const logit::Config& config, RngStream& rng) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index rows = design.num_classes - 1;
  const Eigen::Index p = design.coefficients();
  logit::State state = logit::initial_state(design, config);

  std::vector<Eigen::Index> shrunk;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (j != design.intercept_column || config.shrink_intercept) shrunk.push_back(j);
  }

  Chain chain;
  chain.coef_rows = rows;
  chain.coef_cols = p;
  chain.draws.resize(config.samples, rows * p);
  chain.hyper.resize(config.samples);
  chain.hyper_name = "theta";
  chain.log_likelihood.resize(config.samples);

  Eigen::MatrixXd shrunk_tau(rows, static_cast<Eigen::Index>(shrunk.size()));
  const long total = static_cast<long>(config.burn_in) + static_cast<long>(config.samples) * config.thin;
  Eigen::Index stored = 0;
  for (long iter = 0; iter < total; ++iter) {
    for (int k = 0; k < rows; ++k) {
      update_beta_block(k, state, design, config, rng);
      for (std::size_t s = 0; s < shrunk.size(); ++s) {
        const Eigen::Index j = shrunk[s];
        state.tau(k, j) = update_tau(state.beta(k, j), std::sqrt(state.theta), rng);
        shrunk_tau(k, static_cast<Eigen::Index>(s)) = state.tau(k, j);
      }
    }
    if (!config.fixed_theta && shrunk_tau.size() > 0) {
      state.theta = update_theta(shrunk_tau, config.hyper_c, config.hyper_d, rng);
    }

    if (iter < config.burn_in) continue;
    if ((iter - config.burn_in + 1) % config.thin != 0) continue;
    for (Eigen::Index k = 0; k < rows; ++k) chain.draws.row(stored).segment(k * p, p) = state.beta.row(k);
    chain.hyper(stored) = state.theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < design.size(); ++i) {
      ll += std::log(logit_probabilities(design.X.row(i).transpose(), state.beta)(design.labels(i)));
    }
    chain.log_likelihood(stored) = ll;
    ++stored;
  }
  chain.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return chain;
}

Eigen::MatrixXd logit_predict_rows(const Chain& chain, const Eigen::MatrixXd& X, bool intercept) {
  if (chain.empty()) throw Error(ErrorKind::kEmptyChain, "cannot predict from an empty chain");
  Eigen::MatrixXd design = X;
  if (intercept) {
    design.conservativeResize(Eigen::NoChange, X.cols() + 1);
    design.col(X.cols()).setOnes();
  }
  if (design.cols() != chain.coef_cols) {
    throw Error(ErrorKind::kShapeMismatch, "covariate count does not match the chain");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), chain.coef_rows + 1);
  for (Eigen::Index s = 0; s < chain.size(); ++s) {
    const Eigen::MatrixXd beta = chain.draw(s);
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
      out.row(i) += logit_probabilities(design.row(i).transpose(), beta).transpose();
    }
  }
  return out / static_cast<double>(chain.size());
}

}  // namespace plr
