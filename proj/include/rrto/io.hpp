#pragma once

// "RRTO" array container: a tiny self-describing binary format.
//
//   offset  size        field
//   0       4           magic "RRTO"
//   4       2 (u16 LE)  version (1)
//   6       1 (u8)      dtype code (1 = f64 little-endian)
//   7       1 (u8)      ndim
//   8       8*ndim      dims, u64 LE
//   ...     8*prod      payload, row-major
//
// Files are written with std::ofstream and read fully into memory; arrays
// in this project are at most a few tens of MB.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rrto/error.hpp"

namespace rrto::io {

static_assert(std::endian::native == std::endian::little, "RRTO payloads are little-endian");

inline constexpr char kMagic[4] = {'R', 'R', 'T', 'O'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct Array {
  std::vector<std::uint64_t> shape;
  std::vector<double> data;

  std::uint64_t count() const {
    return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
  }
  bool operator==(const Array&) const = default;
};

inline std::size_t header_size(std::size_t ndim) { return 8 + 8 * ndim; }

inline std::vector<std::uint8_t> encode(const Array& a) {
  if (a.count() != a.data.size())
    throw ContractError("rrto encode: shape product " + std::to_string(a.count()) +
                        " != payload length " + std::to_string(a.data.size()));
  if (a.shape.size() > 255) throw ContractError("rrto encode: too many dimensions");
  std::vector<std::uint8_t> out(header_size(a.shape.size()) + 8 * a.data.size());
  std::memcpy(out.data(), kMagic, 4);
  std::memcpy(out.data() + 4, &kVersion, 2);
  out[6] = kDtypeF64;
  out[7] = static_cast<std::uint8_t>(a.shape.size());
  std::memcpy(out.data() + 8, a.shape.data(), 8 * a.shape.size());
  if (!a.data.empty())
    std::memcpy(out.data() + header_size(a.shape.size()), a.data.data(), 8 * a.data.size());
  return out;
}

/// `origin` names the source in error messages.
inline Array decode(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>") {
  auto fail = [&](const std::string& m) { throw FormatError(origin + ": " + m); };
  if (bytes.size() < 8)
    fail("truncated header: expected at least 8 bytes, got " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail("bad magic (expected \"RRTO\")");
  std::uint16_t version;
  std::memcpy(&version, bytes.data() + 4, 2);
  if (version != kVersion)
    fail("unsupported version " + std::to_string(version) + " (expected " +
         std::to_string(kVersion) + ")");
  if (bytes[6] != kDtypeF64) fail("unsupported dtype code " + std::to_string(bytes[6]));
  const std::size_t ndim = bytes[7];
  if (bytes.size() < header_size(ndim))
    fail("truncated header: expected " + std::to_string(header_size(ndim)) + " bytes, got " +
         std::to_string(bytes.size()));
  Array a;
  a.shape.resize(ndim);
  std::memcpy(a.shape.data(), bytes.data() + 8, 8 * ndim);
  const std::uint64_t n = a.count();
  const std::uint64_t expected = header_size(ndim) + 8 * n;
  if (bytes.size() != expected)
    fail("size mismatch: expected " + std::to_string(expected) + " bytes, got " +
         std::to_string(bytes.size()));
  a.data.resize(n);
  if (n) std::memcpy(a.data.data(), bytes.data() + header_size(ndim), 8 * n);
  return a;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

inline void write_array(const std::filesystem::path& path, const Array& a) {
  write_bytes(path, encode(a));
}

inline Array read_array(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode(bytes, path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << text;
}

/// 64-bit FNV-1a, used for config provenance hashes.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

}  // namespace rrto::io
