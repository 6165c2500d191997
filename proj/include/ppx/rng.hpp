#pragma once

#include <cstdint>
#include <random>

namespace ppx {

/// Execution policy for the data-parallel kernels. Both paths produce
/// bit-identical results; `serial` is the reference.
enum class Exec { serial, parallel };

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed of substream `stream` under `seed`. Independent of evaluation order,
/// so any work unit can rebuild its generator without coordination.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double normal() { return normal_(engine_); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ppx
