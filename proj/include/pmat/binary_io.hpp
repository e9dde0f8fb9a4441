#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pmat/errors.hpp"

namespace pmat::binary {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_f64(std::ostream& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

// Sequential reader that tracks its offset for error reporting.
class Reader {
 public:
  Reader(std::istream& in, std::size_t base_offset) : in_(in), offset_(base_offset) {}

  std::size_t offset() const { return offset_; }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw LoadError(std::string("truncated file while reading ") + what, offset_);
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(reinterpret_cast<char*>(&v), sizeof v, what);
    return to_little(v);
  }

  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(reinterpret_cast<char*>(&v), sizeof v, what);
    return to_little(v);
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

 private:
  std::istream& in_;
  std::size_t offset_;
};

}  // namespace pmat::binary
