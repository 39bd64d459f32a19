#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abd {

using Digest = std::array<std::uint8_t, 32>;

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SHA-256 (OpenSSL backed).
Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws Error(InvalidRequest) on bad input.
Digest digest_from_hex(std::string_view hex);

/// Identifier of the only hash algorithm the ledger currently supports.
inline constexpr std::string_view kSha256Id = "sha256";

/// Stateless counter-based mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Appends little-endian encodings to a byte buffer.
class ByteWriter {
 public:
  void put_u64(std::uint64_t v);
  void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
  void put_f64(double v);
  void put_bytes(std::string_view s);

  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

}  // namespace abd
