#include "plr/variational.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "plr/errors.hpp"

namespace plr {

void VBConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::kConfig, "max_iters must be at least 1");
  if (!(rel_tol > 0.0)) throw Error(ErrorKind::kConfig, "rel_tol must be positive");
}

namespace {

void require_hyper(double hyper_a, double hyper_b) {
  if (!(hyper_a > 0.0) || !(hyper_b > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "variational inference needs a > 0 and b > 0");
  }
}

Eigen::MatrixXd expected_log_lambda(const VariationalState& state) {
  Eigen::MatrixXd out(state.shape.rows(), state.shape.cols());
  for (Eigen::Index k = 0; k < out.rows(); ++k) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(k, j) = digamma(state.shape(k, j)) - std::log(state.rate(k, j));
    }
  }
  return out;
}

void check_finite(double value, const char* what, Eigen::Index where) {
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::kNumeric, std::string(what) + " is not finite at index " + std::to_string(where));
  }
}

}  // namespace

VariationalState initial_state(const Design& design, double hyper_a, double hyper_b) {
  require_hyper(hyper_a, hyper_b);
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.features();
  VariationalState state;
  state.rho = Eigen::MatrixXd::Constant(n, p, 1.0 / static_cast<double>(p));
  state.shape = Eigen::MatrixXd::Constant(design.num_classes, p, hyper_a);
  state.rate = Eigen::MatrixXd::Constant(design.num_classes, p, hyper_b);
  const Eigen::VectorXd column_mass = state.mean_lambda().colwise().sum().transpose();
  state.z_mean = (design.W * column_mass).cwiseInverse();
  return state;
}

void vb_update(VariationalState& state, const Design& design, double hyper_a, double hyper_b) {
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.features();
  const Eigen::MatrixXd log_lambda = expected_log_lambda(state);
  const Eigen::VectorXd column_mass = state.mean_lambda().colwise().sum().transpose();

  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = design.labels(i);
    Eigen::RowVectorXd logits = design.W.row(i).array().log() + log_lambda.row(y).array();
    const double top = logits.maxCoeff();
    check_finite(top, "responsibility logit", i);
    Eigen::RowVectorXd weights = (logits.array() - top).exp();
    state.rho.row(i) = weights / weights.sum();
    const double rate = design.W.row(i).dot(column_mass);
    state.z_mean(i) = 1.0 / rate;
    check_finite(state.z_mean(i), "expected arrival", i);
  }

  const Eigen::MatrixXd counts = expected_counts(design, state.rho);
  const Eigen::VectorXd exposure = design.W.transpose() * state.z_mean;
  state.shape = (counts.array() + hyper_a).matrix();
  for (Eigen::Index j = 0; j < p; ++j) state.rate.col(j).setConstant(hyper_b + exposure(j));
}

double elbo(const VariationalState& state, const Design& design, double hyper_a, double hyper_b) {
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.features();
  const Eigen::MatrixXd log_lambda = expected_log_lambda(state);
  const Eigen::MatrixXd mean_lambda = state.mean_lambda();
  const Eigen::VectorXd column_mass = mean_lambda.colwise().sum().transpose();

  double bound = 0.0;
  // Complete-data term and entropy of q(C).
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = design.labels(i);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double r = state.rho(i, j);
      if (r <= 0.0) continue;
      bound += r * (std::log(design.W(i, j)) + log_lambda(y, j) - std::log(r));
    }
    const double z = state.z_mean(i);
    bound -= z * design.W.row(i).dot(column_mass);
    bound += 1.0 + std::log(z);  // entropy of Exp with mean z
  }
  // Prior and entropy of q(lambda).
  const double prior_const = hyper_a * std::log(hyper_b) - std::lgamma(hyper_a);
  for (Eigen::Index k = 0; k < state.shape.rows(); ++k) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double alpha = state.shape(k, j);
      const double beta = state.rate(k, j);
      bound += prior_const + (hyper_a - 1.0) * log_lambda(k, j) - hyper_b * mean_lambda(k, j);
      bound += alpha - std::log(beta) + std::lgamma(alpha) + (1.0 - alpha) * digamma(alpha);
    }
  }
  if (!std::isfinite(bound)) throw Error(ErrorKind::kNumeric, "evidence lower bound is not finite");
  return bound;
}

VariationalState fit_vb_from(VariationalState state, const Design& design, double hyper_a,
                             double hyper_b, const VBConfig& config) {
  config.validate();
  require_hyper(hyper_a, hyper_b);
  state.elbo_trace.clear();
  state.iterations = 0;
  state.converged = false;
  double previous = elbo(state, design, hyper_a, hyper_b);
  state.elbo_trace.push_back(previous);
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    vb_update(state, design, hyper_a, hyper_b);
    const double current = elbo(state, design, hyper_a, hyper_b);
    state.elbo_trace.push_back(current);
    state.iterations = iter;
    if (std::abs(current - previous) < config.rel_tol * std::max(std::abs(previous), 1e-300)) {
      state.converged = true;
      break;
    }
    previous = current;
  }
  return state;
}

VariationalState fit_vb(const Design& design, double hyper_a, double hyper_b,
                        const VBConfig& config) {
  return fit_vb_from(initial_state(design, hyper_a, hyper_b), design, hyper_a, hyper_b, config);
}

Eigen::MatrixXd vb_predict_rows(const VariationalState& state, const Eigen::MatrixXd& W,
                                VBPrediction mode, int draws, RngStream* rng) {
  const Eigen::Index K = state.shape.rows();
  Eigen::MatrixXd out(W.rows(), K);
  if (mode == VBPrediction::kPlugIn) {
    const Eigen::MatrixXd lambda = state.mean_lambda();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      out.row(i) = class_probabilities(W.row(i).transpose(), lambda).transpose();
    }
    return out;
  }
  if (rng == nullptr || draws < 1) {
    throw Error(ErrorKind::kInvalidParameter, "Monte Carlo prediction needs a stream and draws >= 1");
  }
  out.setZero();
  Eigen::MatrixXd lambda(K, state.shape.cols());
  for (int s = 0; s < draws; ++s) {
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
        lambda(k, j) = sample_gamma(state.shape(k, j), state.rate(k, j), *rng);
      }
    }
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      out.row(i) += class_probabilities(W.row(i).transpose(), lambda).transpose();
    }
  }
  return out / static_cast<double>(draws);
}

TypeTwoResult type2_ml_a(const Design& design, double hyper_b, const TypeTwoConfig& config) {
  if (!(config.a_lower > 0.0) || !(config.a_upper >= config.a_lower)) {
    throw Error(ErrorKind::kInvalidParameter, "type-II search needs 0 < a_lower <= a_upper");
  }
  TypeTwoResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  VariationalState warm;
  bool have_warm = false;

  auto evaluate = [&](double ln_a) {
    const double a = std::exp(ln_a);
    VariationalState fitted = have_warm
                                  ? fit_vb_from(warm, design, a, hyper_b, config.vb)
                                  : fit_vb(design, a, hyper_b, config.vb);
    const double value = fitted.elbo_trace.back() - ln_a;
    ++best.evaluations;
    warm = fitted;
    have_warm = true;
    if (value > best.objective) {
      best.objective = value;
      best.hyper_a = a;
      best.state = std::move(fitted);
    }
    return value;
  };

  const double ln_lower = std::log(config.a_lower);
  const double ln_upper = std::log(config.a_upper);
  if (config.a_upper == config.a_lower) {
    evaluate(ln_lower);
    best.hyper_a = config.a_lower;
    return best;
  }

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  auto golden = [&](double lo, double hi) {
    double c = hi - ratio * (hi - lo);
    double d = lo + ratio * (hi - lo);
    double fc = evaluate(c);
    double fd = evaluate(d);
    while (hi - lo > config.ln_a_tolerance) {
      if (fc >= fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - ratio * (hi - lo);
        fc = evaluate(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + ratio * (hi - lo);
        fd = evaluate(d);
      }
    }
  };

  evaluate(ln_lower);
  evaluate(ln_upper);
  golden(ln_lower, ln_upper);
  const double golden_best = best.objective;

  // Check scan from cold starts; a better grid point means the objective has
  // another mode, which is then refined.
  const int m = std::max(config.grid_points, 2);
  const double step = (ln_upper - ln_lower) / static_cast<double>(m - 1);
  double grid_best = -std::numeric_limits<double>::infinity();
  int grid_arg = 0;
  for (int g = 0; g < m; ++g) {
    have_warm = false;
    const double value = evaluate(ln_lower + step * static_cast<double>(g));
    if (value > grid_best) {
      grid_best = value;
      grid_arg = g;
    }
  }
  if (grid_best > golden_best + 1e-9 * std::abs(golden_best)) {
    best.used_grid_fallback = true;
    have_warm = false;
    golden(ln_lower + step * std::max(grid_arg - 1, 0), ln_lower + step * std::min(grid_arg + 1, m - 1));
  }
  return best;
}

}  // namespace plr
