#pragma once

#include <Eigen/Dense>

#include "plr/chain.hpp"
#include "plr/model.hpp"
#include "plr/stochastic.hpp"

namespace plr {

struct GibbsConfig {
  int burn_in = 5000;
  int samples = 5000;
  int thin = 1;
  bool sample_hyper_a = false;
  double mh_step_scale = 0.1;   // random-walk scale on ln a
  bool adapt_step = true;       // tune the scale during burn-in only
  bool rescale_lambda = false;
  // Support of the 1/a prior on a.
  double a_lower = 1e-3;
  double a_upper = 1e3;

  void validate() const;
};

struct GibbsState {
  Eigen::MatrixXd lambda;
  double hyper_a = 1.0;
};

// One pass of the conjugate sampler: C_i from the class-restricted feature
// posterior, Z_i ~ Exp(W_i' sum_l lambda_l), then every lambda_kj from
// Gam(a + n_kj, b + sum_i Z_i W_ij). Returns the latent draws.
AugmentedState gibbs_sweep(GibbsState& state, const Design& design, double hyper_b,
                           RngStream& rng);

// sum_kj ln Gam(lambda_kj; a, b) + ln p(a) with p(a) = 1/a on [lower, upper].
double hyper_a_log_target(double hyper_a, const Eigen::MatrixXd& lambda, double hyper_b,
                          double lower, double upper);

// Log acceptance ratio for a move a -> a_proposed under the log-normal random
// walk: target ratio times the proposal Jacobian a' / a.
double mh_log_acceptance(double hyper_a, double proposed, const Eigen::MatrixXd& lambda,
                         double hyper_b, double lower, double upper);

struct MHStep {
  double hyper_a;
  bool accepted;
};

MHStep mh_update_a(double hyper_a, const Eigen::MatrixXd& lambda, double hyper_b, double scale,
                   RngStream& rng, double lower = 1e-3, double upper = 1e3);

// Redraw the total mass from its marginal Gam(K p a, b) and rescale; the
// normalised weights are unchanged.
Eigen::MatrixXd rescale_total_mass(const Eigen::MatrixXd& lambda, double hyper_a,
                                   double hyper_b, RngStream& rng);

// Mode of the total-mass marginal, (K p a - 1) / b.
double total_mass_map(Eigen::Index classes, Eigen::Index features, double hyper_a,
                      double hyper_b);

Chain run_chain(const Design& design, double hyper_a, double hyper_b, const GibbsConfig& config,
                RngStream& rng);

// Bayesian model average of the class probabilities over the stored draws.
Eigen::VectorXd posterior_predict(const Chain& chain, const Eigen::VectorXd& w);
// Row-wise version for an n x p feature matrix; returns n x K.
Eigen::MatrixXd posterior_predict_rows(const Chain& chain, const Eigen::MatrixXd& W);

struct PosteriorSummary {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd median;
  Eigen::MatrixXd lower;  // 5% quantile
  Eigen::MatrixXd upper;  // 95% quantile
};

// Per-entry summaries of the draws, normalised per draw unless `normalize`
// is false.
PosteriorSummary posterior_summaries(const Chain& chain, bool normalize = true);

}  // namespace plr
