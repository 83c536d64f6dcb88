#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsc {

/// 64-bit FNV-1a hash, used to fold substream names into seeds.
std::uint64_t fnv1a64(std::string_view bytes);

/// SplitMix64 mixing step; spreads correlated seeds apart before they
/// reach the engine.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic random stream with named substreams.
///
/// All randomness in a run flows from one root seed. Components that must
/// be independently reproducible (simulation, exploration, estimation)
/// derive their own stream via substream("name"); the derived seed depends
/// only on (root seed, name), so a component can be re-run in isolation
/// against the same draws.
class RngStream {
 public:
  static constexpr std::string_view algorithm = "mt19937_64";

  explicit RngStream(std::uint64_t seed);
  RngStream(std::uint64_t root_seed, std::string_view name);

  std::uint64_t seed() const { return seed_; }

  RngStream substream(std::string_view name) const;

  std::mt19937_64& engine() { return engine_; }

  /// Uniform draw in [0, 1).
  double uniform01();

  /// Uniform integer in [lo, hi], both ends inclusive.
  int uniform_int(int lo, int hi);

  std::uint64_t next_u64();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tsc
