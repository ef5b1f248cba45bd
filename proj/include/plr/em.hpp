#pragma once

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

#include "plr/model.hpp"
#include "plr/stochastic.hpp"

namespace plr {

enum class InitScheme { kConstantOne, kPriorDraw };

struct EMConfig {
  int max_iters = 10000;
  double rel_tol = 1e-8;
  InitScheme init = InitScheme::kConstantOne;

  void validate() const;
};

// Posterior over the latent feature of each observation (n x p, rows sum to
// one) and the expected arrival times <z_i> = 1 / (W_i' sum_l lambda_l).
struct EStep {
  Eigen::MatrixXd responsibilities;
  Eigen::VectorXd expected_arrival;
};

EStep e_step_responsibilities(const Design& design, const Eigen::MatrixXd& lambda);

// <n_kj> = sum over observations of class k of their responsibility for j.
Eigen::MatrixXd expected_counts(const Design& design, const Eigen::MatrixXd& responsibilities);

// Closed-form maximiser of the expected complete-data log posterior:
// (a - 1 + <n_kj>) / (b + sum_i <z_i> W_ij) when the numerator is positive,
// exactly zero otherwise.
Eigen::MatrixXd m_step(const Eigen::MatrixXd& expected_counts,
                       const Eigen::VectorXd& expected_arrival, const Design& design,
                       double hyper_a, double hyper_b);

// ln p(Y | lambda) + sum over positive entries of (a - 1) ln lambda - b lambda.
// Constants independent of lambda are dropped, so values are comparable only
// between runs that share (a, b). Zero entries contribute nothing.
double penalized_log_posterior(const Design& design, const Eigen::MatrixXd& lambda,
                               double hyper_a, double hyper_b);

// Gradient of penalized_log_posterior with respect to every entry (entries
// with lambda = 0 are reported as 0).
Eigen::MatrixXd penalized_log_posterior_gradient(const Design& design,
                                                 const Eigen::MatrixXd& lambda, double hyper_a,
                                                 double hyper_b);

struct EMTrace {
  std::vector<double> objective;    // one value per iterate, starting with the initial point
  std::vector<int> zero_count;      // exact zeros of each iterate
  Eigen::MatrixXd lambda;
  int iterations = 0;
  bool converged = false;
  std::vector<std::pair<int, int>> zero_pattern;  // (k, j) with lambda_kj == 0

  Eigen::MatrixXd normalized() const { return lambda / lambda.sum(); }
};

// MAP estimate by EM. With hyper_a < 1 entries may be set exactly to zero and
// stay there. Throws kInfeasibleState if every weight of a class that has
// training observations is zeroed; a larger hyper_a avoids that.
EMTrace fit_map(const Design& design, double hyper_a, double hyper_b, const EMConfig& config,
                RngStream& rng);

// Same, starting from a given weight matrix (used for warm-started paths).
EMTrace fit_map_from(const Design& design, Eigen::MatrixXd initial, double hyper_a,
                     double hyper_b, const EMConfig& config);

}  // namespace plr
