#include "plr/em.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "plr/errors.hpp"

namespace plr {

void EMConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::kConfig, "max_iters must be at least 1");
  if (!(rel_tol > 0.0)) throw Error(ErrorKind::kConfig, "rel_tol must be positive");
}

EStep e_step_responsibilities(const Design& design, const Eigen::MatrixXd& lambda) {
  const Eigen::Index n = design.size();
  const Eigen::Index p = design.features();
  EStep out{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  const Eigen::VectorXd column_mass = lambda.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto w = design.W.row(i);
    out.responsibilities.row(i) = w.cwiseProduct(lambda.row(design.labels(i)));
    const double norm = out.responsibilities.row(i).sum();
    if (!(norm > 0.0)) {
      throw Error(ErrorKind::kInfeasibleState,
                  "observation " + std::to_string(i) + " has zero probability under its class weights");
    }
    out.responsibilities.row(i) /= norm;
    out.expected_arrival(i) = 1.0 / w.dot(column_mass);
  }
  return out;
}

Eigen::MatrixXd expected_counts(const Design& design, const Eigen::MatrixXd& responsibilities) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(design.num_classes, design.features());
  for (Eigen::Index i = 0; i < design.size(); ++i) counts.row(design.labels(i)) += responsibilities.row(i);
  return counts;
}

Eigen::MatrixXd m_step(const Eigen::MatrixXd& expected_counts,
                       const Eigen::VectorXd& expected_arrival, const Design& design,
                       double hyper_a, double hyper_b) {
  const Eigen::VectorXd exposure = design.W.transpose() * expected_arrival;
  Eigen::MatrixXd lambda(expected_counts.rows(), expected_counts.cols());
  for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
    const double denominator = hyper_b + exposure(j);
    if (!(denominator > 0.0)) {
      throw Error(ErrorKind::kInvalidParameter, "M-step denominator is not positive");
    }
    for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
      const double numerator = hyper_a - 1.0 + expected_counts(k, j);
      lambda(k, j) = numerator > 0.0 ? numerator / denominator : 0.0;
    }
  }
  return lambda;
}

double penalized_log_posterior(const Design& design, const Eigen::MatrixXd& lambda,
                               double hyper_a, double hyper_b) {
  double prior = 0.0;
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
      const double l = lambda(k, j);
      if (l > 0.0) prior += (hyper_a - 1.0) * std::log(l) - hyper_b * l;
    }
  }
  return log_likelihood(design, lambda) + prior;
}

Eigen::MatrixXd penalized_log_posterior_gradient(const Design& design,
                                                 const Eigen::MatrixXd& lambda, double hyper_a,
                                                 double hyper_b) {
  const Eigen::MatrixXd scores = design.W * lambda.transpose();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(lambda.rows(), lambda.cols());
  for (Eigen::Index i = 0; i < design.size(); ++i) {
    const auto w = design.W.row(i);
    grad.row(design.labels(i)) += w / scores(i, design.labels(i));
    grad.rowwise() -= w / scores.row(i).sum();
  }
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    for (Eigen::Index j = 0; j < lambda.cols(); ++j) {
      if (lambda(k, j) > 0.0) {
        grad(k, j) += (hyper_a - 1.0) / lambda(k, j) - hyper_b;
      } else {
        grad(k, j) = 0.0;
      }
    }
  }
  return grad;
}

namespace {

int count_zeros(const Eigen::MatrixXd& lambda) {
  return static_cast<int>((lambda.array() == 0.0).count());
}

void guard_class_wipeout(const Design& design, const Eigen::MatrixXd& lambda, double hyper_a) {
  std::vector<bool> present(static_cast<std::size_t>(design.num_classes), false);
  for (Eigen::Index i = 0; i < design.size(); ++i) present[static_cast<std::size_t>(design.labels(i))] = true;
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    if (present[static_cast<std::size_t>(k)] && !(lambda.row(k).array() > 0.0).any()) {
      throw Error(ErrorKind::kInfeasibleState,
                  "every weight of class " + std::to_string(k + 1) + " was set to zero at a = " +
                      std::to_string(hyper_a) + "; use a larger a");
    }
  }
}

}  // namespace

EMTrace fit_map_from(const Design& design, Eigen::MatrixXd initial, double hyper_a,
                     double hyper_b, const EMConfig& config) {
  config.validate();
  if (!(hyper_a > 0.0) || !(hyper_b >= 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "EM needs a > 0 and b >= 0");
  }
  if (initial.rows() != design.num_classes || initial.cols() != design.features()) {
    throw Error(ErrorKind::kShapeMismatch, "initial weights have the wrong shape");
  }
  if ((initial.array() < 0.0).any() || !initial.allFinite()) {
    throw Error(ErrorKind::kInvalidParameter, "initial weights must be finite and non-negative");
  }
  guard_class_wipeout(design, initial, hyper_a);

  EMTrace trace;
  trace.lambda = std::move(initial);
  double previous = penalized_log_posterior(design, trace.lambda, hyper_a, hyper_b);
  trace.objective.push_back(previous);
  trace.zero_count.push_back(count_zeros(trace.lambda));

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const Eigen::MatrixXd normalized_before = trace.lambda / trace.lambda.sum();
    const EStep e = e_step_responsibilities(design, trace.lambda);
    Eigen::MatrixXd next = m_step(expected_counts(design, e.responsibilities), e.expected_arrival,
                                  design, hyper_a, hyper_b);
    guard_class_wipeout(design, next, hyper_a);
    trace.lambda = std::move(next);
    trace.iterations = iter;

    const double current = penalized_log_posterior(design, trace.lambda, hyper_a, hyper_b);
    if (!std::isfinite(current)) {
      throw Error(ErrorKind::kNumeric, "penalized log posterior became non-finite at iteration " +
                                           std::to_string(iter));
    }
    trace.objective.push_back(current);
    trace.zero_count.push_back(count_zeros(trace.lambda));
    const bool support_unchanged = trace.zero_count.back() == trace.zero_count[trace.zero_count.size() - 2];
    // Converged when the objective or the normalized weights settle.
    const Eigen::MatrixXd normalized_after = trace.lambda / trace.lambda.sum();
    const bool objective_settled =
        std::abs(current - previous) < config.rel_tol * std::max(std::abs(previous), 1e-300);
    const bool weights_settled = (normalized_after - normalized_before).cwiseAbs().maxCoeff() <
                                 config.rel_tol * normalized_after.maxCoeff();
    if (support_unchanged && (objective_settled || weights_settled)) {
      trace.converged = true;
      break;
    }
    previous = current;
  }

  for (Eigen::Index k = 0; k < trace.lambda.rows(); ++k) {
    for (Eigen::Index j = 0; j < trace.lambda.cols(); ++j) {
      if (trace.lambda(k, j) == 0.0) trace.zero_pattern.emplace_back(static_cast<int>(k), static_cast<int>(j));
    }
  }
  return trace;
}

EMTrace fit_map(const Design& design, double hyper_a, double hyper_b, const EMConfig& config,
                RngStream& rng) {
  Eigen::MatrixXd initial = Eigen::MatrixXd::Ones(design.num_classes, design.features());
  if (config.init == InitScheme::kPriorDraw) {
    // Rate 1 when b = 0.
    const double rate = hyper_b > 0.0 ? hyper_b : 1.0;
    for (Eigen::Index k = 0; k < initial.rows(); ++k) {
      for (Eigen::Index j = 0; j < initial.cols(); ++j) initial(k, j) = sample_gamma(hyper_a, rate, rng);
    }
  }
  return fit_map_from(design, std::move(initial), hyper_a, hyper_b, config);
}

}  // namespace plr
