#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace csmae {

// Seeded random source with platform-independent draws. Streams for parallel or
// resumable work are derived from (seed, indices...) instead of shared state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

  std::uint64_t next();
  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1)
  double uniform(double lo, double hi);
  double normal();
  double gumbel();
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace csmae
