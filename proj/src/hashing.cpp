#include "abd/hashing.hpp"

#include <bit>
#include <cstring>

#include <openssl/evp.h>

#include "abd/error.hpp"

namespace abd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::InvalidRequest: return "invalid-request";
    case ErrorCode::Config: return "config";
    case ErrorCode::Conservation: return "conservation";
    case ErrorCode::Io: return "io";
    case ErrorCode::Unauthorized: return "unauthorized";
  }
  return "unknown";
}

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    fail(ErrorCode::Config, "sha256 digest failed");
  }
  return out;
}

Digest sha256(std::string_view bytes) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

Digest digest_from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  Digest d{};
  if (hex.size() != d.size() * 2) fail(ErrorCode::InvalidRequest, "digest must be 64 hex chars");
  for (std::size_t i = 0; i < d.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(ErrorCode::InvalidRequest, "digest must be lowercase hex");
    d[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return d;
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_bytes(std::string_view s) {
  put_u64(s.size());
  buf_.insert(buf_.end(), s.begin(), s.end());
}

}  // namespace abd
