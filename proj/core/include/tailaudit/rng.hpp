#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tailaudit {

/// SplitMix64 finalizer over (master, stream). Used everywhere a child seed
/// is derived from a master seed: record streams, epoch shuffles, bootstrap
/// resamples, sweep cells. Child streams are statistically independent for
/// distinct stream ids.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

/// FNV-1a 64-bit of a tag string; lets named streams be derived as
/// mix_seed(seed, stream_tag("shuffle")).
std::uint64_t stream_tag(std::string_view name);

inline std::uint64_t mix_seed(std::uint64_t master, std::string_view tag) {
  return mix_seed(master, stream_tag(tag));
}

/// Deterministic random stream: std::mt19937_64 (whose output sequence the
/// standard fixes) with explicit distribution mappings. std::*_distribution
/// algorithms are implementation-defined, so none are used here; outputs are
/// reproducible across platforms for a given libm.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream child(std::uint64_t master, std::uint64_t stream) {
    return RngStream(mix_seed(master, stream));
  }
  static RngStream child(std::uint64_t master, std::string_view tag) {
    return RngStream(mix_seed(master, stream_tag(tag)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via the Marsaglia polar method (rejection; caches the
  /// spare deviate).
  double normal();

  /// Gamma(shape, 1) via Marsaglia–Tsang, with the standard shape<1 boost.
  double gamma(double shape);

  /// Beta(a, b) as Ga/(Ga+Gb).
  double beta(double a, double b);

  /// Uniform index in [0, n); rejection sampling, no modulo bias.
  std::size_t index(std::size_t n);

  /// Fisher–Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tailaudit
