#pragma once

#include <cstdint>
#include <span>

namespace vaest {

// 64-bit FNV-1a over raw bytes. Used to fingerprint loaded files and
// shuffled data orders so runs can assert they saw identical inputs.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t value, std::uint64_t seed) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  return fnv1a64(std::span<const unsigned char>(buf, 8), seed);
}

}  // namespace vaest
