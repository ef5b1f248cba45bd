#pragma once

#include <Eigen/Dense>

#include <optional>

#include "plr/chain.hpp"
#include "plr/model.hpp"
#include "plr/stochastic.hpp"

namespace plr {

// Bayesian multinomial logit with a Laplace (Bayesian-lasso) prior on the
// coefficients:
//
//   beta_kj | tau_kj ~ N(0, tau_kj),  tau_kj ~ Exp(theta / 2),  theta ~ Gam(c, d),
//
// so marginally beta_kj is double-exponential with rate sqrt(theta). Class
// K is the reference class with coefficients fixed at zero. Each class block
// is sampled conditional on the others through the logistic auxiliary
// variables of Holmes and Held: z_ik = x_i'beta_k - offset_ik + e_ik, with
// e_ik logistic, written as a normal scale mixture with variance v_ik.
namespace logit {

struct Config {
  int burn_in = 5000;
  int samples = 5000;
  int thin = 1;
  double hyper_c = 1.0;
  double hyper_d = 1.0;
  bool intercept = true;          // append a constant covariate
  bool shrink_intercept = false;  // otherwise its variance is fixed
  double intercept_variance = 100.0;
  bool likelihood_enabled = true;  // false samples the prior only
  std::optional<double> fixed_theta;
  int max_rejections = 100000;

  void validate() const;
};

struct Design {
  Eigen::MatrixXd X;  // n x p, intercept column last when present
  Eigen::VectorXi labels;
  int num_classes = 0;
  Eigen::Index intercept_column = -1;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index coefficients() const { return X.cols(); }
};

Design make_design(const Dataset& data, bool intercept);

struct State {
  Eigen::MatrixXd beta;     // (K - 1) x p
  Eigen::MatrixXd tau;      // (K - 1) x p local variances
  double theta = 1.0;       // rate of the exponential prior on tau
  Eigen::MatrixXd latent;   // n x (K - 1) auxiliary utilities
  Eigen::MatrixXd mixing;   // n x (K - 1) scale-mixture variances
};

State initial_state(const Design& design, const Config& config);

}  // namespace logit

// Softmax over the K - 1 linear scores and the zero score of the reference class.
Eigen::VectorXd logit_probabilities(const Eigen::VectorXd& x, const Eigen::MatrixXd& beta);

// Draw from the standard logistic shifted by `mean`, restricted to the
// positive half-line when `positive` and to the negative one otherwise.
double sample_truncated_logistic(double mean, bool positive, RngStream& rng);

// Mixing variance v of a logistic residual r: draws from p(v | r) where
// r | v ~ N(0, v) and v = (2 psi)^2 with psi Kolmogorov-Smirnov distributed.
// Rejection sampler with alternating-series acceptance; throws
// kSamplerStall after max_rejections proposals.
double sample_logistic_mixing_variance(double residual, RngStream& rng, int max_rejections);

// 1/tau ~ iGauss(sqrt(rate^2 / beta^2), rate^2) where rate is the Laplace rate
// sqrt(theta); |beta| is floored at 1e-10.
double update_tau(double beta, double laplace_rate, RngStream& rng);

// theta | tau ~ Gam(m + c, sum(tau) / 2 + d), m = number of tau entries.
double update_theta(const Eigen::MatrixXd& tau, double hyper_c, double hyper_d, RngStream& rng);

// Joint draw of the auxiliary variables and beta_k given the other classes.
void update_beta_block(int k, logit::State& state, const logit::Design& design,
                       const logit::Config& config, RngStream& rng);

// Stores beta draws ((K - 1) x p, row-major) with theta as the hyper column.
Chain run_logit_chain(const logit::Design& design, const logit::Config& config, RngStream& rng);

// Posterior predictive class probabilities (n x K) for raw covariates; the
// intercept column is appended when the design used one.
Eigen::MatrixXd logit_predict_rows(const Chain& chain, const Eigen::MatrixXd& X, bool intercept);

}  // namespace plr
