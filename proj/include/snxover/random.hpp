#ifndef SNXOVER_RANDOM_HPP_
#define SNXOVER_RANDOM_HPP_

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace snxover {

/// SplitMix64 finalizer, used to derive independent sub-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/*
 * A seeded random stream: std::mt19937_64 (fully specified by the
 * standard) driving Boost's ziggurat normal sampler. Both are
 * header-defined algorithms, so a given seed yields the same stream on
 * every platform, unlike std::normal_distribution.
 *
 * A stream has a single owner. Parallel work gets its own stream via
 * split(), which hashes (seed, index) into a fresh seed.
 */
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  RngStream split(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
  }

  double normal() { return normal_(engine_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace snxover

#endif  // SNXOVER_RANDOM_HPP_
