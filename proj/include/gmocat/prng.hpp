#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gmocat::prng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a decorrelated sub-stream seed from a base seed and a tag path,
/// e.g. derive(seed, {kSplitTag, epoch, student}).
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = seed;
  std::uint64_t out = splitmix64(s);
  for (std::uint64_t t : tags) {
    s ^= t + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    out = splitmix64(s);
  }
  return out;
}

// Stream tags for the sub-seeds used across the project. Centralized so two
// call sites can never collide by accident.
enum Stream : std::uint64_t {
  kStudentSplit = 1,
  kCandidateMeta = 2,
  kEpisode = 3,
  kDropout = 4,
  kInit = 5,
  kWorld = 6,
  kTrainOrder = 7,
  kValidation = 8,
  kEvalSplit = 9,
  kCalibration = 10,
};

/// mt19937_64 with hand-rolled distributions. std::uniform_int_distribution
/// and friends are implementation-defined, so sequences would differ across
/// standard libraries; these are pinned to give bit-identical streams on any
/// conforming toolchain.
class Engine {
 public:
  explicit Engine(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) by rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  /// Box-Muller without caching the second deviate.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return mean + sd * r * std::cos(2.0 * M_PI * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// First k elements of a shuffled copy; order within the sample is random.
  template <class T>
  std::vector<T> sample(const std::vector<T>& pool, std::size_t k) {
    std::vector<T> copy = pool;
    shuffle(copy);
    if (k < copy.size()) copy.resize(k);
    return copy;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gmocat::prng
