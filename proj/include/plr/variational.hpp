#pragma once

#include <Eigen/Dense>

#include <vector>

#include "plr/em.hpp"
#include "plr/model.hpp"
#include "plr/stochastic.hpp"

namespace plr {

struct VBConfig {
  int max_iters = 10000;
  double rel_tol = 1e-8;

  void validate() const;
};

// Mean-field posterior q(C) q(Z) q(lambda).
//
// q(C_i) lives on the features of the observed class only, so the
// responsibilities are stored as an n x p matrix: row i is q(C_i = j) for
// class Y_i, and the responsibility of any other class is exactly zero.
// q(Z_i) is Exp(1 / z_mean_i) and q(lambda_kj) is Gam(shape_kj, rate_kj).
struct VariationalState {
  Eigen::MatrixXd rho;
  Eigen::MatrixXd shape;
  Eigen::MatrixXd rate;
  Eigen::VectorXd z_mean;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;

  Eigen::MatrixXd mean_lambda() const { return shape.cwiseQuotient(rate); }
  // rho_kji, zero off the observed class.
  double responsibility(const Eigen::VectorXi& labels, int k, Eigen::Index j, Eigen::Index i) const {
    return labels(i) == k ? rho(i, j) : 0.0;
  }
};

// Prior parameters for q(lambda), uniform rho, z_mean consistent with the
// prior means.
VariationalState initial_state(const Design& design, double hyper_a, double hyper_b);

// One coordinate-ascent sweep: rho and <z> from the current q(lambda), then
// q(lambda) from the new rho and <z>.
void vb_update(VariationalState& state, const Design& design, double hyper_a, double hyper_b);

// Evidence lower bound: E_q[ln p(Y, C, Z, lambda)] + H[q(C)] + H[q(Z)] + H[q(lambda)].
double elbo(const VariationalState& state, const Design& design, double hyper_a, double hyper_b);

// Iterates vb_update until the relative change of the bound drops below
// rel_tol. elbo_trace holds the bound of the starting state followed by one
// value per sweep.
VariationalState fit_vb(const Design& design, double hyper_a, double hyper_b,
                        const VBConfig& config);
VariationalState fit_vb_from(VariationalState start, const Design& design, double hyper_a,
                             double hyper_b, const VBConfig& config);

enum class VBPrediction { kPlugIn, kMonteCarlo };

// Class probabilities from q(lambda): plug-in posterior mean, or an average
// of class probabilities over `draws` samples of q(lambda).
Eigen::MatrixXd vb_predict_rows(const VariationalState& state, const Eigen::MatrixXd& W,
                                VBPrediction mode = VBPrediction::kPlugIn, int draws = 1000,
                                RngStream* rng = nullptr);

struct TypeTwoConfig {
  double a_lower = 1e-3;
  double a_upper = 1e3;
  double ln_a_tolerance = 1e-3;
  int grid_points = 25;
  VBConfig vb;
};

struct TypeTwoResult {
  double hyper_a = 0.0;
  double objective = 0.0;  // converged bound minus ln a
  VariationalState state;
  bool used_grid_fallback = false;
  int evaluations = 0;
};

// Hyperparameter a maximising the converged bound plus ln p(a) = -ln a, by
// golden-section search on ln a. A scan over grid_points log-spaced values
// follows; if it finds a better point the objective was not unimodal, the
// search is repeated around that point and used_grid_fallback is set.
TypeTwoResult type2_ml_a(const Design& design, double hyper_b, const TypeTwoConfig& config);

}  // namespace plr
