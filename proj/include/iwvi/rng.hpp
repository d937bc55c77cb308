#ifndef IWVI_RNG_HPP
#define IWVI_RNG_HPP

#include <cstdint>
#include <random>

namespace iwvi {

using Rng = std::mt19937_64;

/// Tags separating the independent streams derived from one root seed.
enum class StreamPurpose : std::uint64_t {
  kSample = 0x51,
  kEta = 0x52,
  kParticle = 0x53,
  kSimulate = 0x54,
  kOptimizer = 0x55,
  kSummary = 0x56,
};

/// Identifies the stream a batch was drawn from. Re-deriving the stream from
/// the same record reproduces the batch bit-exactly.
struct SeedRecord {
  std::uint64_t root = 0;
  std::uint64_t stream = 0;

  friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for the (index, purpose) child of `root`. Distinct
/// (index, purpose) pairs give statistically independent Mersenne streams.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index, StreamPurpose purpose);

Rng make_stream(std::uint64_t root, std::uint64_t index, StreamPurpose purpose);

inline Rng make_stream(const SeedRecord& record, StreamPurpose purpose) {
  return make_stream(record.root, record.stream, purpose);
}

}  // namespace iwvi

#endif  // IWVI_RNG_HPP
