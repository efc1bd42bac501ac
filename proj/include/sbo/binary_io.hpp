#pragma once

#include "sbo/error.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace sbo::binio {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return byteswap_if_big(v);
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char got[4] = {};
  if (!is.read(got, 4)) throw FormatError("file too short for magic header");
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
}

}  // namespace sbo::binio
