#include "plr/stochastic.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "plr/errors.hpp"

namespace plr {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t state = seed;
  std::uint64_t a = splitmix64(state);
  state ^= stream_id * 0xD1B54A32D192ED03ULL;
  std::uint64_t b = splitmix64(state);
  std::uint64_t c = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return std::mt19937_64(seq);
}

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorKind::kInvalidParameter,
                std::string(what) + " must be positive and finite, got " + std::to_string(value));
  }
}

double gamma_marsaglia_tsang(double shape, RngStream& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kTransformOverflow: return "transform-overflow";
    case ErrorKind::kDegenerateWeights: return "degenerate-weights";
    case ErrorKind::kInfeasibleState: return "infeasible-state";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kEmptyChain: return "empty-chain";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kUndefinedMetric: return "undefined-metric";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kSamplerStall: return "sampler-stall";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::split(std::uint64_t stream_id) const {
  std::uint64_t state = seed_ ^ (stream_id_ * 0x9E3779B97F4A7C15ULL);
  return RngStream(splitmix64(state), stream_id);
}

double RngStream::uniform() {
  // 53 random bits centred in their cell: never exactly 0 or 1.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u;
  double v;
  double s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  has_spare_ = true;
  return u * f;
}

double sample_exponential(double rate, RngStream& rng) {
  require_positive(rate, "exponential rate");
  return -std::log(rng.uniform()) / rate;
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  if (shape >= 1.0) return gamma_marsaglia_tsang(shape, rng) / rate;

  const double log_draw =
      std::log(gamma_marsaglia_tsang(shape + 1.0, rng)) + std::log(rng.uniform()) / shape;
  const double draw = std::exp(log_draw) / rate;
  return draw > 0.0 ? draw : std::numeric_limits<double>::min();
}

std::size_t sample_discrete(std::span<const double> weights, RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorKind::kInvalidParameter, "discrete weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "discrete weights are all zero");
  }
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] <= 0.0) continue;
    cumulative += weights[j];
    last_positive = j;
    if (target < cumulative) return j;
  }
  // Rounding in the running sum can leave target just above it.
  return last_positive;
}

double sample_inverse_gaussian(double mean, double shape, RngStream& rng) {
  require_positive(mean, "inverse-Gaussian mean");
  require_positive(shape, "inverse-Gaussian shape");
  const double nu = rng.normal();
  const double y = nu * nu;
  const double my = mean * y;
  // mean - 2 mean^2 y / (mean y + sqrt(4 mean shape y + mean^2 y^2)), the
  // cancellation-free form of the smaller root.
  const double root = std::sqrt(4.0 * mean * shape * y + my * my);
  const double x = my > 0.0 ? mean - 2.0 * mean * my / (my + root) : mean;
  const double x_pos = x > 0.0 ? x : std::numeric_limits<double>::min();
  if (rng.uniform() <= mean / (mean + x_pos)) return x_pos;
  return mean * mean / x_pos;
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw Error(ErrorKind::kDomain, "digamma requires a positive finite argument");
  }
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Asymptotic series with Bernoulli-number coefficients.
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return result + std::log(x) - 0.5 * inv - series;
}

}  // namespace plr
