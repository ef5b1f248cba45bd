#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace plr {

// Seeded random stream. Streams derived from distinct (seed, stream_id)
// pairs own disjoint engines, so workers can each hold one without sharing
// mutable state. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Child stream keyed by id; does not advance this stream.
  RngStream split(std::uint64_t stream_id) const;

  // Uniform on the open interval (0, 1).
  double uniform();
  // Standard normal (Marsaglia polar method).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

double sample_exponential(double rate, RngStream& rng);

// Shape-rate parameterisation, mean shape / rate. Shapes below one go through
// the boost G(shape) = G(shape + 1) * U^(1 / shape), evaluated in log space;
// a draw that underflows is returned as the smallest positive normal double
// so the result stays strictly positive.
double sample_gamma(double shape, double rate, RngStream& rng);

// Index j with probability weights[j] / sum(weights).
std::size_t sample_discrete(std::span<const double> weights, RngStream& rng);

// Inverse Gaussian with density sqrt(shape / (2 pi x^3)) exp(-shape (x - mean)^2 / (2 mean^2 x)).
// Michael-Schucany-Haas transformation with a single acceptance step.
double sample_inverse_gaussian(double mean, double shape, RngStream& rng);

double digamma(double x);

}  // namespace plr
