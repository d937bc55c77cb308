#include "iwvi/rng.hpp"

namespace iwvi {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index, StreamPurpose purpose) {
  const auto tag = static_cast<std::uint64_t>(purpose);
  return mix64(mix64(root ^ mix64(tag)) + mix64(index + 0x632be59bd9b4e019ULL));
}

Rng make_stream(std::uint64_t root, std::uint64_t index, StreamPurpose purpose) {
  return Rng(derive_seed(root, index, purpose));
}

}  // namespace iwvi
