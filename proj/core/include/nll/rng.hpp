#pragma once

#include <cstdint>

namespace nll {

// Counter-based, splittable random source. Output i of a stream is a pure
// function of (key, i); split() derives an independent child key from a tag
// without touching the parent's counter, so streams can be handed out by
// value and regenerated anywhere from the seed alone.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  // Child stream identified by `tag`. Same parent key + same tag gives the
  // same child regardless of how many values the parent has produced.
  [[nodiscard]] RandomStream split(std::uint64_t tag) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // True with probability p (p clamped to [0, 1]).
  bool bernoulli(double p);

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  struct KeyTag {};
  RandomStream(KeyTag, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream tags used across the library. Fixed so that runs stay reproducible
// across versions.
namespace stream_tag {
inline constexpr std::uint64_t kInit = 0x696e6974;        // "init"
inline constexpr std::uint64_t kShuffle = 0x73687566;     // "shuf"
inline constexpr std::uint64_t kStep = 0x73746570;        // "step"
inline constexpr std::uint64_t kComplementary = 0x636f6d70;  // "comp"
inline constexpr std::uint64_t kSelect = 0x73656c65;      // "sele"
inline constexpr std::uint64_t kNoise = 0x6e6f6973;       // "nois"
inline constexpr std::uint64_t kData = 0x64617461;        // "data"
inline constexpr std::uint64_t kPseudo = 0x70736575;      // "pseu"
}  // namespace stream_tag

}  // namespace nll
