#pragma once

// Little-endian primitive encoding for the fixture formats. Doubles are
// written as their IEEE-754 bit pattern, so round trips are bit-exact.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace varlen::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 4);
}

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& os, std::string_view magic, std::uint32_t version) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u32(os, version);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw FormatError("truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

inline std::uint32_t read_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

inline std::uint8_t read_u8(std::istream& is) {
  const int c = is.get();
  if (c == std::char_traits<char>::eof()) throw FormatError("truncated file");
  return static_cast<std::uint8_t>(c);
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

/// Reads and checks a magic tag followed by a u32 version.
inline void expect_magic(std::istream& is, std::string_view magic, std::uint32_t version) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  const std::uint32_t v = read_u32(is);
  if (v != version)
    throw FormatError("unsupported version " + std::to_string(v) + " (expected " +
                      std::to_string(version) + ")");
}

/// Guards element counts read from disk against absurd allocations.
inline std::uint64_t read_count(std::istream& is, std::uint64_t limit, const char* what) {
  const std::uint64_t n = read_u64(is);
  if (n > limit) throw FormatError(std::string("implausible ") + what + " count");
  return n;
}

}  // namespace varlen::io
