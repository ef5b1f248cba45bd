#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "checks.hpp"
#include "oracles.hpp"
#include "plr/errors.hpp"
#include "plr/gibbs.hpp"
#include "plr/variational.hpp"
#include "synthetic.hpp"

using plr::ErrorKind;
using plr::RngStream;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const plr::Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kNumeric;
}

plr::Design tiny_design() {
  Eigen::MatrixXd W(4, 2);
  W << 1.0, 0.2, 0.3, 1.5, 2.0, 0.5, 0.7, 0.9;
  Eigen::VectorXi y(4);
  y << 0, 1, 0, 1;
  return {W, y, 2};
}

double accuracy(const Eigen::MatrixXd& probs, const Eigen::VectorXi& labels) {
  int correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    correct += best == labels(i);
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

}  // namespace

TEST_CASE("responsibilities") {
  SUBCASE("symmetric row") {
    const plr::Design design{Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXi::Zero(1), 1};
    plr::VariationalState state = plr::initial_state(design, 1.0, 1.0);
    plr::vb_update(state, design, 1.0, 1.0);
    CHECK(state.rho(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(state.rho(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("rows normalise, counts total n and other classes get nothing") {
    RngStream rng(1);
    const plr::Design design = synthetic::pl_design(50, 3, 3, rng);
    plr::VariationalState state = plr::initial_state(design, 0.7, 1.0);
    for (int it = 0; it < 5; ++it) plr::vb_update(state, design, 0.7, 1.0);
    CHECK((state.rho.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(std::abs(plr::expected_counts(design, state.rho).sum() - 50.0) < 1e-10);
    for (Eigen::Index i = 0; i < design.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        if (k != design.labels(i)) REQUIRE(state.responsibility(design.labels, k, 0, i) == 0.0);
      }
    }
  }
}

TEST_CASE("q(lambda) has the conjugate form with expectations plugged in") {
  RngStream rng(2);
  const plr::Design design = synthetic::pl_design(40, 2, 3, rng);
  plr::VariationalState state = plr::initial_state(design, 1.5, 2.0);
  for (Eigen::Index e = 0; e < state.shape.size(); ++e) {
    state.shape(e) = 0.5 + rng.uniform();
    state.rate(e) = 0.5 + rng.uniform();
  }
  plr::vb_update(state, design, 1.5, 2.0);
  const Eigen::MatrixXd counts = plr::expected_counts(design, state.rho);
  const Eigen::VectorXd exposure = design.W.transpose() * state.z_mean;
  CHECK((state.shape - (counts.array() + 1.5).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index k = 0; k < 3; ++k) {
    CHECK((state.rate.row(k).transpose() - (exposure.array() + 2.0).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("one-feature fixed point") {
  Eigen::MatrixXd W(5, 1);
  W << 0.5, 1.0, 2.0, 1.5, 0.25;
  Eigen::VectorXi y(5);
  y << 0, 1, 1, 0, 1;
  const plr::Design design{W, y, 2};
  plr::VBConfig config;
  config.rel_tol = 1e-15;
  const plr::VariationalState state = plr::fit_vb(design, 1.2, 0.8, config);
  CHECK(state.shape(0, 0) == doctest::Approx(1.2 + 2.0).epsilon(1e-12));
  CHECK(state.shape(1, 0) == doctest::Approx(1.2 + 3.0).epsilon(1e-12));
  const double mass = state.shape.sum() / state.rate(0, 0);
  double exposure = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(state.z_mean(i) == doctest::Approx(1.0 / (W(i, 0) * mass)).epsilon(1e-9));
    exposure += state.z_mean(i) * W(i, 0);
  }
  CHECK(state.rate(0, 0) == doctest::Approx(0.8 + exposure).epsilon(1e-9));
  CHECK(state.rate(1, 0) == state.rate(0, 0));
}

TEST_CASE("smallest instance matches an independent numerical evaluation of the bound") {
  const plr::Design design{Eigen::MatrixXd::Constant(1, 1, 1.5), Eigen::VectorXi::Zero(1), 1};
  plr::VariationalState state = plr::initial_state(design, 2.0, 3.0);
  state.shape(0, 0) = 2.5;
  state.rate(0, 0) = 1.7;
  state.z_mean(0) = 0.4;
  state.rho(0, 0) = 1.0;
  // Double integrals of ln p - ln q under q in 30-digit arithmetic.
  CHECK(std::abs(plr::elbo(state, design, 2.0, 3.0) - (-1.063342255879565265276077981390)) < 1e-10);
}

TEST_CASE("bound never decreases over 50 random problems and starts") {
  int monotone = 0;
  for (int rep = 0; rep < 50; ++rep) {
    RngStream rng(100 + static_cast<std::uint64_t>(rep));
    const int K = 2 + rep % 3;
    const plr::Design design = synthetic::pl_design(30 + rep, 1 + rep % 4, K, rng);
    const double a = 0.2 + 2.0 * rng.uniform();
    const double b = 0.2 + 2.0 * rng.uniform();
    plr::VariationalState state = plr::initial_state(design, a, b);
    for (Eigen::Index e = 0; e < state.shape.size(); ++e) {
      state.shape(e) = plr::sample_gamma(2.0, 1.0, rng);
      state.rate(e) = plr::sample_gamma(2.0, 1.0, rng);
    }
    plr::VBConfig config;
    config.max_iters = 300;
    const plr::VariationalState fitted = plr::fit_vb_from(state, design, a, b, config);
    bool ok = true;
    for (std::size_t t = 1; t < fitted.elbo_trace.size(); ++t) {
      const double before = fitted.elbo_trace[t - 1];
      ok = ok && fitted.elbo_trace[t] >= before - 1e-8 * std::abs(before);
    }
    monotone += ok;
  }
  CHECK(monotone == 50);
}

TEST_CASE("bound stays below the exact log evidence") {
  const plr::Design design = tiny_design();
  for (double a : {1.0, 1.5, 3.0}) {
    CAPTURE(a);
    const double exact = checks::log_evidence(design, a);
    const plr::VariationalState state = plr::fit_vb(design, a, 1.0, {});
    CHECK(state.converged);
    for (double value : state.elbo_trace) REQUIRE(value <= exact);
    CHECK(state.elbo_trace.back() > exact - 1.0);
  }
}

TEST_CASE("fit on a separable toy classifies the training data") {
  Eigen::MatrixXd X(40, 1);
  Eigen::VectorXi y(40);
  for (int i = 0; i < 40; ++i) {
    X(i, 0) = (i < 20 ? -1.0 : 1.0) * (0.5 + 0.1 * (i % 20));
    y(i) = i < 20 ? 0 : 1;
  }
  const plr::Design design = plr::make_design(plr::make_dataset(X, y, 2), plr::FeatureMap::default_map(1));
  const plr::VariationalState state = plr::fit_vb(design, 1.0, 1.0, {});
  CHECK(accuracy(plr::vb_predict_rows(state, design.W), y) >= 0.95);
}

TEST_CASE("fits are deterministic") {
  RngStream rng(3);
  const plr::Design design = synthetic::pl_design(60, 2, 3, rng);
  const plr::VariationalState first = plr::fit_vb(design, 0.8, 1.0, {});
  const plr::VariationalState second = plr::fit_vb(design, 0.8, 1.0, {});
  CHECK(first.shape == second.shape);
  CHECK(first.rate == second.rate);
  CHECK(first.elbo_trace == second.elbo_trace);
}

TEST_CASE("posterior means are close to a long Gibbs run") {
  RngStream rng(4);
  const plr::Design design = synthetic::pl_design(300, 1, 2, rng);
  const plr::VariationalState state = plr::fit_vb(design, 2.0, 1.0, {});
  plr::GibbsConfig config;
  config.burn_in = 2000;
  config.samples = 20000;
  const plr::Chain chain = plr::run_chain(design, 2.0, 1.0, config, rng);
  const Eigen::RowVectorXd gibbs_mean = chain.draws.colwise().mean();
  const Eigen::MatrixXd vb_mean = state.mean_lambda();
  for (Eigen::Index k = 0; k < vb_mean.rows(); ++k) {
    for (Eigen::Index j = 0; j < vb_mean.cols(); ++j) {
      const double g = gibbs_mean(k * vb_mean.cols() + j);
      CAPTURE(k);
      CAPTURE(j);
      CHECK(std::abs(vb_mean(k, j) - g) < 0.15 * g);
    }
  }
}

TEST_CASE("predictions") {
  RngStream rng(5);
  const plr::Design design = synthetic::pl_design(50, 2, 3, rng);
  const plr::VariationalState state = plr::fit_vb(design, 1.0, 1.0, {});
  const Eigen::MatrixXd plug = plr::vb_predict_rows(state, design.W);
  CHECK((plug.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd averaged = plr::vb_predict_rows(state, design.W, plr::VBPrediction::kMonteCarlo, 4000, &rng);
  CHECK((averaged.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((averaged - plug).cwiseAbs().maxCoeff() < 0.1);
  CHECK(kind_of([&] { plr::vb_predict_rows(state, design.W, plr::VBPrediction::kMonteCarlo, 10, nullptr); }) ==
        ErrorKind::kInvalidParameter);
}

TEST_CASE("invalid inputs") {
  const plr::Design design = tiny_design();
  plr::VBConfig config;
  config.max_iters = 0;
  CHECK(kind_of([&] { plr::fit_vb(design, 1.0, 1.0, config); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { plr::fit_vb(design, 1.0, 0.0, {}); }) == ErrorKind::kInvalidParameter);
  plr::TypeTwoConfig bad;
  bad.a_lower = 2.0;
  bad.a_upper = 1.0;
  CHECK(kind_of([&] { plr::type2_ml_a(design, 1.0, bad); }) == ErrorKind::kInvalidParameter);
}

TEST_CASE("type-II estimate of a") {
  RngStream rng(6);
  const plr::Design design = synthetic::pl_design(80, 2, 3, rng);
  SUBCASE("maximiser beats both endpoints") {
    plr::TypeTwoConfig config;
    config.a_lower = 0.01;
    config.a_upper = 100.0;
    const plr::TypeTwoResult result = plr::type2_ml_a(design, 1.0, config);
    CHECK(result.hyper_a >= config.a_lower);
    CHECK(result.hyper_a <= config.a_upper);
    for (double a : {config.a_lower, config.a_upper}) {
      const double endpoint = plr::fit_vb(design, a, 1.0, {}).elbo_trace.back() - std::log(a);
      CHECK(result.objective >= endpoint - 1e-6 * std::abs(endpoint));
    }
    CHECK(std::abs(result.state.elbo_trace.back() - std::log(result.hyper_a) - result.objective) < 1e-12);
  }
  SUBCASE("no grid point beats the returned maximiser") {
    plr::TypeTwoConfig config;
    const plr::TypeTwoResult result = plr::type2_ml_a(design, 1.0, config);
    for (int g = 0; g < 13; ++g) {
      const double ln_a = std::log(1e-3) + g * std::log(1e6) / 12.0;
      const double value = plr::fit_vb(design, std::exp(ln_a), 1.0, {}).elbo_trace.back() - ln_a;
      CHECK(result.objective >= value - 1e-6 * std::abs(value));
    }
  }
  SUBCASE("degenerate bracket") {
    plr::TypeTwoConfig config;
    config.a_lower = 0.7;
    config.a_upper = 0.7;
    const plr::TypeTwoResult result = plr::type2_ml_a(design, 1.0, config);
    CHECK(result.hyper_a == 0.7);
    CHECK(result.evaluations == 1);
  }
}

TEST_CASE("sparse generating weights usually give a below one") {
  int below = 0;
  for (int rep = 0; rep < 20; ++rep) {
    RngStream rng(200 + static_cast<std::uint64_t>(rep));
    const plr::FeatureMap map = plr::FeatureMap::default_map(3);
    Eigen::MatrixXd lambda(3, map.dimension());
    for (Eigen::Index e = 0; e < lambda.size(); ++e) lambda(e) = rng.uniform() < 0.7 ? 1e-6 : plr::sample_gamma(2.0, 1.0, rng);
    for (Eigen::Index k = 0; k < 3; ++k) lambda(k, k) = 2.0;
    Eigen::MatrixXd X(200, 3);
    Eigen::VectorXi y(200);
    for (int i = 0; i < 200; ++i) {
      for (int c = 0; c < 3; ++c) X(i, c) = rng.normal();
      const Eigen::VectorXd probs = plr::class_probabilities(plr::transform(X.row(i).transpose(), map), lambda);
      y(i) = static_cast<int>(plr::sample_discrete({probs.data(), static_cast<std::size_t>(probs.size())}, rng));
    }
    for (int k = 0; k < 3; ++k) y(k) = k;
    const plr::Design design = plr::make_design(plr::make_dataset(X, y, 3), map);
    plr::TypeTwoConfig config;
    config.vb.rel_tol = 1e-6;
    below += plr::type2_ml_a(design, 1.0, config).hyper_a < 1.0;
  }
  CHECK(below > 10);
}
