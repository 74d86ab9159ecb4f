#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dmoa {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Seedable random stream.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard,
/// with all variate transforms implemented here rather than through the
/// <random> distributions (those differ between standard libraries). The
/// same seed therefore yields the same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream derived from a master seed, a purpose tag and an index
  /// (e.g. node id). Changing one purpose's consumption never shifts another's.
  static Rng substream(std::uint64_t master_seed, std::string_view purpose,
                       std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer on [0, bound). bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);
  double exponential(double mean);
  double standard_normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace dmoa
