#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>

namespace plr {

// Stored MCMC draws of a rows x cols coefficient matrix, flattened row-major
// in (row, col) order, one draw per row of `draws`. An optional scalar
// hyperparameter trace (a for Plackett-Luce, theta for the logit baseline) is
// kept alongside.
struct Chain {
  Eigen::Index coef_rows = 0;
  Eigen::Index coef_cols = 0;
  Eigen::MatrixXd draws;
  Eigen::VectorXd hyper;          // empty when the hyperparameter was fixed
  std::string hyper_name;         // "a" or "theta"
  Eigen::VectorXd log_likelihood;  // per stored draw
  long mh_accepted = 0;
  long mh_proposed = 0;
  double wall_seconds = 0.0;

  Eigen::Index size() const { return draws.rows(); }
  bool empty() const { return draws.rows() == 0; }
  Eigen::MatrixXd draw(Eigen::Index s) const;
  // Every draw divided by its own total; the identifiable part of a
  // Plackett-Luce weight matrix.
  Eigen::MatrixXd normalized_draws() const;
};

// Header "draw,c_1_1,...,c_R_C[,hyper]" with 1-based indices, then one line
// per draw. Values are written with round-trip precision.
void write_chain_csv(std::ostream& out, const Chain& chain, const std::string& coef_prefix);
Chain read_chain_csv(std::istream& in);

}  // namespace plr
