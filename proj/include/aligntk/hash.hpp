#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

namespace aligntk {

// FNV-1a, 64-bit
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 1469598103934665603ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_str(const std::string& s, std::uint64_t h) {
  return fnv1a(s.data(), s.size(), h);
}

// feeds the value as 8 little-endian bytes regardless of host order
inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(b, 8, h);
}

inline std::uint64_t fnv1a_f64(double v, std::uint64_t h) {
  return fnv1a_u64(std::bit_cast<std::uint64_t>(v), h);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace aligntk
