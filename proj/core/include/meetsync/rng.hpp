#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace meetsync {

/// Derives an independent child seed from a parent seed and a label, so every
/// device, stream and fault injector owns its own generator.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept;

/// mt19937_64 with platform-independent uniform and normal draws (the
/// std:: distributions are implementation-defined, which would break
/// byte-identical outputs across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace meetsync
