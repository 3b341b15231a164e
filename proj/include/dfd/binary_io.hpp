#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfd/error.hpp"

namespace dfd::io {

// Little-endian primitives shared by the DFD1 / DFDS / DFDN containers.

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v)); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }

 private:
  template <typename U>
  void le(U v) {
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(bytes, sizeof(U));
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(m.size()));
    if (!in_ || got != m) throw FormatError(source_ + ": bad magic, expected " + std::string(m));
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(le<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  std::vector<float> f32s(std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

 private:
  template <typename U>
  U le() {
    unsigned char bytes[sizeof(U)];
    in_.read(reinterpret_cast<char*>(bytes), sizeof(U));
    check();
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
  }
  void check() {
    if (!in_) throw MissingData(source_ + ": truncated");
  }
  std::istream& in_;
  std::string source_;
};

}  // namespace dfd::io
