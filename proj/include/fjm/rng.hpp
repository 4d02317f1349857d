#pragma once

#include <cstdint>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace fjm {

using Engine = boost::random::mt19937_64;

/// Purpose tags keep streams for different consumers disjoint even when the
/// remaining key fields collide.
enum class StreamTag : std::uint64_t {
  EStep = 1,
  Likelihood = 2,
  Simulation = 3,
  Calibration = 4,
  Sampling = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Identifies one independent random stream. Per-subject streams are keyed by
/// (seed, iteration, subject) so results never depend on scheduling.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t subject = 0;
  StreamTag tag = StreamTag::Sampling;

  std::uint64_t hash() const {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
    h = splitmix64(h ^ iteration);
    h = splitmix64(h ^ subject);
    return h;
  }

  Engine engine() const { return Engine(hash()); }
};

using NormalDist = boost::random::normal_distribution<double>;
using Uniform01 = boost::random::uniform_01<double>;

}  // namespace fjm
