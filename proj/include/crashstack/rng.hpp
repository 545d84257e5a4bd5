#ifndef CRASHSTACK_RNG_HPP_
#define CRASHSTACK_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace crashstack {

// SplitMix64 finalizer; used to derive independent stream seeds so results
// never depend on the order in which parallel workers consume randomness.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(mix_seed(master) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased and
  // independent of the standard library's distribution implementation.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = engine_.max() - engine_.max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform real in [0, 1) built from the top 53 bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace crashstack

#endif  // CRASHSTACK_RNG_HPP_
