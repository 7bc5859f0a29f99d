#pragma once

// Internal binary stream helpers for the CSSM/CSDS container formats:
// little-endian scalar fields and CRC32-guarded payload blocks.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cscale/error.hpp"

namespace cscale::io {

inline void write_bytes(std::ostream& os, const void* data, size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* data, size_t n, const char* what) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
}

template <typename U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  write_bytes(os, buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  read_bytes(is, buf, sizeof(U), what);
  U value = 0;
  for (size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
  return value;
}

inline uint32_t crc32_of(const void* data, size_t n) {
  return static_cast<uint32_t>(::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

// Payload block: u64le byte length, raw bytes, u32le CRC32 of the bytes.
inline void write_payload(std::ostream& os, const void* data, size_t n) {
  write_le<uint64_t>(os, n);
  write_bytes(os, data, n);
  write_le<uint32_t>(os, crc32_of(data, n));
}

inline std::vector<unsigned char> read_payload(std::istream& is, const char* what) {
  const uint64_t n = read_le<uint64_t>(is, what);
  std::vector<unsigned char> buf(static_cast<size_t>(n));
  if (n > 0) read_bytes(is, buf.data(), buf.size(), what);
  const uint32_t stored = read_le<uint32_t>(is, what);
  const uint32_t actual = crc32_of(buf.data(), buf.size());
  if (stored != actual) {
    throw FormatError(std::string("checksum mismatch in ") + what);
  }
  return buf;
}

// Tensor payloads are IEEE-754 single precision, little endian.
inline void write_f32_payload(std::ostream& os, const float* data, size_t count) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    write_payload(os, data, count * 4);
  } else {
    std::vector<unsigned char> buf(count * 4);
    for (size_t i = 0; i < count; ++i) {
      uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      for (int b = 0; b < 4; ++b) buf[i * 4 + static_cast<size_t>(b)] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    write_payload(os, buf.data(), buf.size());
  }
}

inline std::vector<float> read_f32_payload(std::istream& is, size_t expected_count, const char* what) {
  auto buf = read_payload(is, what);
  if (buf.size() != expected_count * 4) {
    throw FormatError(std::string(what) + " payload holds " + std::to_string(buf.size() / 4) + " values, expected " +
                      std::to_string(expected_count));
  }
  std::vector<float> out(expected_count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), buf.data(), buf.size());
  } else {
    for (size_t i = 0; i < expected_count; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(buf[i * 4 + static_cast<size_t>(b)]) << (8 * b);
      std::memcpy(&out[i], &bits, 4);
    }
  }
  return out;
}

inline std::string escape_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    if (ch == '\\') {
      out += "\\\\";
    } else if (ch == '\n') {
      out += "\\n";
    } else if (ch == '\r') {
      out += "\\r";
    } else {
      out += ch;
    }
  }
  return out;
}

inline std::string unescape_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      if (s[i] == 'n') {
        out += '\n';
      } else if (s[i] == 'r') {
        out += '\r';
      } else {
        out += s[i];
      }
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace cscale::io
