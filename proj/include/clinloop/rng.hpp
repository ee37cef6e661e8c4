#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "clinloop/fnv.hpp"

namespace clinloop {

// splitmix64 finalizer; the mixing step behind keyed streams and the
// stateless randomization-arm draws.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is pinned by the C++ standard; every distribution transform is
// implemented here rather than via std::*_distribution, whose algorithms are
// implementation-defined. This is what makes "identical config => bit
// identical world" hold independently of the standard library build.
//
// Streams are keyed: Rng::keyed(seed, "patient", i, "labs") yields a stream
// that depends only on the key tuple, so generating one entity never
// perturbs the draws of another (drift prefix-identity relies on this).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  template <typename... Parts>
  static Rng keyed(std::uint64_t seed, Parts&&... parts) {
    Fnv64 h;
    h.update_u64(seed);
    (feed(h, std::forward<Parts>(parts)), ...);
    return Rng(mix64(h.digest()));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double u01() { return (eng_() >> 11) * 0x1.0p-53; }

  // Uniform index in [0, n). Modulo draw; the bias is ~n/2^64 and this exact
  // protocol is what the bootstrap oracle re-implements, so keep it.
  std::uint64_t index(std::uint64_t n) { return eng_() % n; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Box-Muller with a cached spare.
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Knuth's product method; fine for the small rates used here.
  int poisson(double lambda);

  bool bernoulli(double p) { return u01() < p; }

 private:
  template <typename T>
  static void feed(Fnv64& h, T&& part) {
    if constexpr (std::is_convertible_v<T, std::string_view>) {
      h.update(std::string_view(part));
    } else {
      h.update_u64(static_cast<std::uint64_t>(part));
    }
  }

  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace clinloop
