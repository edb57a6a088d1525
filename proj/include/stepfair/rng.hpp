#pragma once

#include <cstdint>
#include <cstddef>

namespace stepfair {

// Counter-based generator: every draw is a stateless hash of (key, counter),
// and independent substreams are forked by hashing a tag into the key.  Fork
// order and thread count therefore never affect the values a stream yields.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent child stream addressed by tag; distinct salt keeps fork keys
  // disjoint from the draw sequence.
  RngStream fork(std::uint64_t tag) const {
    return RngStream(mix(mix(key_ ^ 0xd6e8feb86659fd93ull) + mix(tag)));
  }
  RngStream fork(std::uint64_t a, std::uint64_t b) const { return fork(a).fork(b); }
  RngStream fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return fork(a).fork(b).fork(c);
  }

  std::uint64_t next_u64() { return mix(mix(counter_++) ^ key_); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Inverse-CDF draw from an unnormalized-by-rounding probability row.
  int categorical(const double* prob, int n) {
    double u = next_double();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += prob[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace stepfair
