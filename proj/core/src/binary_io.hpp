#pragma once

// Little-endian readers/writers shared by the snapshot, stats and checkpoint files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "price/catalog.hpp"

namespace price::io {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    written_ += size;
  }

  template <typename T>
  void integer(T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    std::array<unsigned char, sizeof(T)> buffer{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buffer[i] = static_cast<unsigned char>(bits & 0xFFU);
      if constexpr (sizeof(T) > 1) bits = static_cast<U>(bits >> 8U);
    }
    bytes(buffer.data(), buffer.size());
  }

  void u8(std::uint8_t v) { integer(v); }
  void u32(std::uint32_t v) { integer(v); }
  void u64(std::uint64_t v) { integer(v); }
  void i32(std::int32_t v) { integer(v); }
  void f64(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { integer(std::bit_cast<std::uint32_t>(v)); }

  void string(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  std::size_t written() const { return written_; }

 private:
  std::ostream& out_;
  std::size_t written_ = 0;
};

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  void bytes(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) throw DataError("corrupt " + what_ + ": unexpected end of file");
  }

  template <typename T>
  T integer() {
    using U = std::make_unsigned_t<T>;
    std::array<unsigned char, sizeof(T)> buffer{};
    bytes(buffer.data(), buffer.size());
    U bits = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) {
      if constexpr (sizeof(T) > 1) bits = static_cast<U>(bits << 8U);
      bits = static_cast<U>(bits | buffer[i]);
    }
    return static_cast<T>(bits);
  }

  std::uint8_t u8() { return integer<std::uint8_t>(); }
  std::uint32_t u32() { return integer<std::uint32_t>(); }
  std::uint64_t u64() { return integer<std::uint64_t>(); }
  std::int32_t i32() { return integer<std::int32_t>(); }
  double f64() { return std::bit_cast<double>(integer<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(integer<std::uint32_t>()); }

  /// Reads a length prefix and rejects lengths beyond `limit`.
  std::uint64_t length(std::uint64_t limit) {
    const auto n = u64();
    if (n > limit) throw DataError("corrupt " + what_ + ": implausible length " + std::to_string(n));
    return n;
  }

  std::string string(std::uint64_t limit = 1U << 30U) {
    std::string s(length(limit), '\0');
    bytes(s.data(), s.size());
    return s;
  }

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    bytes(got.data(), got.size());
    if (got != magic) throw DataError("corrupt " + what_ + ": bad magic");
  }

  const std::string& what() const { return what_; }

 private:
  std::istream& in_;
  std::string what_;
};

}  // namespace price::io
