#pragma once

// Little-endian primitive readers/writers for the weights and feature formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "oiqa/error.hpp"

namespace oiqa::binio {

template <class UInt>
void write_le(std::ostream& os, UInt v) {
  unsigned char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(UInt));
}

inline void write_f32(std::ostream& os, double v) {
  write_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

template <class UInt>
UInt read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(UInt)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

inline double read_f32(std::istream& is, const char* what) {
  return static_cast<double>(std::bit_cast<float>(read_le<std::uint32_t>(is, what)));
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char buf[4];
  if (!is.read(buf, 4)) throw FormatError(std::string("truncated ") + what + " header");
  if (std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(std::string("bad magic in ") + what + ": expected '" + magic + "'");
  }
}

}  // namespace oiqa::binio
