// Little-endian readers and writers for the embedding and checkpoint files.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "asqp/core.hpp"

namespace asqp::io {

template <typename UInt>
void put_uint(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t k = 0; k < sizeof(UInt); ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_uint(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt)))
    throw FormatError(std::string("truncated file while reading ") + what);
  UInt v = 0;
  for (std::size_t k = 0; k < sizeof(UInt); ++k) v |= static_cast<UInt>(bytes[k]) << (8 * k);
  return v;
}

inline void put_f32(std::ostream& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in, const char* what) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(in, what));
}
inline void put_f64(std::ostream& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(in, what));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const char* what, std::uint32_t max_len = 1u << 24) {
  const auto len = get_uint<std::uint32_t>(in, what);
  if (len > max_len) throw FormatError(std::string("implausible string length for ") + what);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw FormatError(std::string("truncated file while reading ") + what);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw FormatError("'" + path + "' does not start with magic \"" + std::string(magic, 4) + "\"");
}

}  // namespace asqp::io
