#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "plr/errors.hpp"
#include "plr/stochastic.hpp"

namespace plr {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Observed covariates and labels. Labels are 0-based here; the 1-based
// external convention is applied only when reading and writing files.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi labels;
  int num_classes = 0;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index covariates() const { return X.cols(); }
  std::vector<int> class_counts() const;
  // Classes with no observation; permitted, but callers may want to warn.
  std::vector<int> empty_classes() const;
};

// Validates shapes, finiteness and label range.
Dataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXi labels, int num_classes);

enum class TransformKind {
  kPositiveExp,   // exp(x_j)
  kNegativeExp,   // exp(-x_j)
  kOffset,        // 1
  kPairPositive,  // exp(x_j + x_l)
  kPairNegative,  // exp(-x_j - x_l)
};

struct Transform {
  TransformKind kind = TransformKind::kOffset;
  int first = -1;
  int second = -1;

  friend bool operator==(const Transform&, const Transform&) = default;
};

class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Transform> transforms);

  // exp(x_1..x_d), exp(-x_1..-x_d), offset: p = 2d + 1.
  static FeatureMap default_map(int covariates);

  // Comma-separated tokens: "default", "exp:J", "negexp:J", "offset",
  // "pair:J:L", "negpair:J:L" with 0-based covariate indices.
  static FeatureMap parse(std::string_view spec, int covariates);
  std::string to_spec() const;

  FeatureMap& add(Transform transform);

  Eigen::Index dimension() const { return static_cast<Eigen::Index>(transforms_.size()); }
  // Smallest covariate count this map can be applied to.
  int required_covariates() const;
  const std::vector<Transform>& transforms() const { return transforms_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::vector<Transform> transforms_;
};

std::string describe(const Transform& transform);

template <typename Derived>
Vector<typename Derived::Scalar> transform(const Eigen::MatrixBase<Derived>& row,
                                           const FeatureMap& map) {
  using Scalar = typename Derived::Scalar;
  if (row.size() < map.required_covariates()) {
    throw Error(ErrorKind::kShapeMismatch, "covariate row is shorter than the feature map requires");
  }
  Vector<Scalar> w(map.dimension());
  for (Eigen::Index j = 0; j < map.dimension(); ++j) {
    const Transform& t = map.transforms()[static_cast<std::size_t>(j)];
    Scalar argument = Scalar(0);
    switch (t.kind) {
      case TransformKind::kPositiveExp: argument = row(t.first); break;
      case TransformKind::kNegativeExp: argument = -row(t.first); break;
      case TransformKind::kOffset: argument = Scalar(0); break;
      case TransformKind::kPairPositive: argument = row(t.first) + row(t.second); break;
      case TransformKind::kPairNegative: argument = -(row(t.first) + row(t.second)); break;
    }
    using std::exp;
    using std::isfinite;
    const Scalar value = exp(argument);
    if (!isfinite(value) || !(value > Scalar(0))) {
      throw Error(ErrorKind::kTransformOverflow,
                  "feature " + describe(t) + " is not a positive finite number for covariate value " +
                      std::to_string(static_cast<double>(argument)) +
                      "; standardize the covariates");
    }
    w(j) = value;
  }
  return w;
}

// Row-wise transform of an n x d covariate matrix into the n x p features.
template <typename Derived>
Matrix<typename Derived::Scalar> transform_rows(const Eigen::MatrixBase<Derived>& X,
                                                const FeatureMap& map) {
  Matrix<typename Derived::Scalar> W(X.rows(), map.dimension());
  for (Eigen::Index i = 0; i < X.rows(); ++i) W.row(i) = transform(X.row(i).transpose(), map).transpose();
  return W;
}

// Non-negative K x p weight matrix with its Gamma(shape, rate) prior.
template <typename Scalar>
struct PLWeights {
  Matrix<Scalar> lambda;
  Scalar hyper_a = Scalar(1);
  Scalar hyper_b = Scalar(1);

  Eigen::Index classes() const { return lambda.rows(); }
  Eigen::Index features() const { return lambda.cols(); }
  Scalar total_mass() const { return lambda.sum(); }
  Matrix<Scalar> normalized() const { return lambda / lambda.sum(); }
};

using PLWeightsd = PLWeights<double>;

// Latent feature index C (0-based) and arrival time Z per observation.
struct AugmentedState {
  Eigen::VectorXi feature;
  Eigen::VectorXd arrival;
};

// Features, labels and class count: everything the inference code needs.
struct Design {
  Eigen::MatrixXd W;
  Eigen::VectorXi labels;
  int num_classes = 0;

  Eigen::Index size() const { return W.rows(); }
  Eigen::Index features() const { return W.cols(); }
};

Design make_design(const Dataset& data, const FeatureMap& map);

// Pr(Y = k | W) = W'lambda_k / sum_l W'lambda_l.
template <typename DerivedW, typename DerivedL>
Vector<typename DerivedL::Scalar> class_probabilities(const Eigen::MatrixBase<DerivedW>& w,
                                                      const Eigen::MatrixBase<DerivedL>& lambda) {
  using Scalar = typename DerivedL::Scalar;
  Vector<Scalar> scores = lambda * w;
  const Scalar total = scores.sum();
  if (!(total > Scalar(0))) {
    throw Error(ErrorKind::kDegenerateWeights, "all class scores are zero");
  }
  return scores / total;
}

template <typename DerivedW, typename Scalar>
Vector<Scalar> class_probabilities(const Eigen::MatrixBase<DerivedW>& w,
                                   const PLWeights<Scalar>& weights) {
  return class_probabilities(w, weights.lambda);
}

// Mixture weight of each feature once the latent feature index is integrated
// out: pi_j = W_j sum_k lambda_kj / W' sum_l lambda_l.
template <typename DerivedW, typename DerivedL>
Vector<typename DerivedL::Scalar> mixture_weights(const Eigen::MatrixBase<DerivedW>& w,
                                                  const Eigen::MatrixBase<DerivedL>& lambda) {
  using Scalar = typename DerivedL::Scalar;
  Vector<Scalar> mass = w.cwiseProduct(lambda.colwise().sum().transpose());
  const Scalar total = mass.sum();
  if (!(total > Scalar(0))) {
    throw Error(ErrorKind::kDegenerateWeights, "feature masses are all zero");
  }
  return mass / total;
}

template <typename DerivedW, typename Scalar>
Vector<Scalar> mixture_weights(const Eigen::MatrixBase<DerivedW>& w,
                               const PLWeights<Scalar>& weights) {
  return mixture_weights(w, weights.lambda);
}

// Empirical winning frequencies of the exponential race: every (class,
// feature) competitor draws V ~ Exp(W_j lambda_kj) and the class holding the
// earliest arrival wins. Competitors with zero rate never arrive. Draws are
// spread across `threads` workers, each with its own child stream.
Eigen::VectorXd race_oracle(const Eigen::VectorXd& w, const Eigen::MatrixXd& lambda, long draws,
                            RngStream& rng, int threads = 0);

// sum_i ln Pr(Y_i | W_i, lambda).
double log_likelihood(const Design& design, const Eigen::MatrixXd& lambda);

// Complete-data log-likelihood of (Y, C, Z). Returns -infinity when an
// occupied (class, feature) cell has lambda = 0; empty cells with lambda = 0
// contribute nothing.
double log_complete_likelihood(const Design& design, const Eigen::MatrixXd& lambda,
                               const AugmentedState& aug);

// n_kj = #{i : Y_i = k, C_i = j}.
Eigen::MatrixXd occupancy_counts(const Design& design, const Eigen::VectorXi& feature);

}  // namespace plr
