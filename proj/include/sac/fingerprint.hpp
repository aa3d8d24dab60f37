// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string_view>

namespace sac {

// FNV-1a, 64-bit. Content identification, not cryptography.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// FNV-1a, 128-bit, emitted big-endian. Used for codebook fingerprints.
inline std::array<std::uint8_t, 16> fnv1a128(const void* data,
                                             std::size_t len) {
  using u128 = unsigned __int128;
  // offset basis 0x6c62272e07bb014262b821756295c58d, prime 2^88 + 2^8 + 0x3b
  u128 h = (static_cast<u128>(0x6c62272e07bb0142ull) << 64) |
           0x62b821756295c58dull;
  const u128 prime = (static_cast<u128>(1) << 88) | 0x13b;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= prime;
  }
  std::array<std::uint8_t, 16> out{};
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(h & 0xff);
    h >>= 8;
  }
  return out;
}

}  // namespace sac
