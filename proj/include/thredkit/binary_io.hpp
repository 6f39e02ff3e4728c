#ifndef THREDKIT_BINARY_IO_HPP
#define THREDKIT_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "thredkit/error.hpp"

namespace thredkit::io {

// Little-endian fixed-width encoding for the model and topic files.

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::size_t max_len = 1u << 28) {
  const auto n = read_le<std::uint32_t>(in);
  if (n > max_len) throw IoError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("unexpected end of file");
  return s;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) write_le<double>(out, v);
}

inline std::vector<double> read_doubles(std::istream& in, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = read_le<double>(in);
  return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& source) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw IoError("'" + source + "' is not a " + std::string(magic, 4) + " file");
  }
}

}  // namespace thredkit::io

#endif  // THREDKIT_BINARY_IO_HPP
