#pragma once

// Little-endian encode/decode shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "falsecl/errors.hpp"

namespace falsecl::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

/// Sequential reader over an in-memory buffer; throws FormatError on overrun.
class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::size_t remaining() const { return buf_.size() - pos_; }

  std::string_view take(std::size_t n) {
    if (remaining() < n) throw FormatError("unexpected end of data");
    std::string_view s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view take_line() {
    const std::size_t nl = buf_.find('\n', pos_);
    if (nl == std::string_view::npos) throw FormatError("missing line terminator");
    std::string_view s = buf_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return s;
  }

  std::uint64_t u64() { return le(take(8)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(take(4))); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::int32_t i32() { return std::bit_cast<std::int32_t>(u32()); }

 private:
  static std::uint64_t le(std::string_view bytes) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < bytes.size(); ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    }
    return v;
  }

  std::string_view buf_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace falsecl::detail
