#pragma once

#include <cstdint>
#include <limits>

namespace ocrrestore {

// Source of randomness consumed by noise generation, sampling decoders and
// the training loops. Virtual so tests can rig exact draw sequences.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual std::uint64_t next_u64() = 0;

  // Uniform double in [0, 1), 53 significant bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t zone = n * (std::numeric_limits<std::uint64_t>::max() / n);
    std::uint64_t r = next_u64();
    while (r >= zone) r = next_u64();
    return r % n;
  }
};

// SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter-based generator.
// The state is a counter advanced by the odd constant 0x9e3779b97f4a7c15
// and each output is a bijective finalizer of the counter value, so streams
// can be split deterministically: fork(key) seeds a child stream from the
// parent seed mixed with the key, giving independent reproducible streams
// for per-batch or per-task parallelism.
class SplitMix64 final : public RandomSource {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() override {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Child stream keyed off the current state. Does not advance the parent,
  // so fork(0), fork(1), ... give independent reproducible streams.
  SplitMix64 fork(std::uint64_t key) const {
    SplitMix64 mixer(state_ ^ (0x632be59bd9b4e019ULL * (key + 1)));
    return SplitMix64(mixer.next_u64());
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace ocrrestore
