#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace dpgtr {

// Seeded randomness source shared by every sampling routine.
//
// Uniform draws are built directly from the raw 64-bit engine output rather
// than std::uniform_*_distribution, whose algorithms are implementation
// defined. This keeps seeded runs byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Independent child stream keyed by index; the parent is not advanced.
  Rng derive(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

  static std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; also used as a stable non-cryptographic hash mixer.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over bytes, stable across platforms (std::hash is not).
std::uint64_t stable_hash(const void* data, std::size_t size);

template <typename Container>
void shuffle(Container& items, Rng& rng) {
  using std::swap;
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.below(i));
    swap(items[i - 1], items[j]);
  }
}

}  // namespace dpgtr
