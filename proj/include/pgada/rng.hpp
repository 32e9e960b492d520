#pragma once

#include <cstdint>
#include <random>

namespace pgada {

// Seeded generator keyed by (seed, stream-id). Two streams with the same key
// produce identical sequences regardless of which thread consumes them, so
// parallel workers derive their own stream from a task index instead of
// sharing one engine.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Independent child stream; same (parent key, tag) always yields the same child.
  RngStream derive(std::uint64_t tag) const;

  double normal(double mean = 0.0, double sigma = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> unit_normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace pgada
