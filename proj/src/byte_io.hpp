#pragma once

#include <bit>
#include <cstring>
#include <string>

#include "avlit/errors.hpp"

namespace avlit::detail {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

template <typename U>
void put_le(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

/// Bounds-checked little-endian cursor. Errors carry the failing offset.
class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string context) : bytes_(bytes), context_(std::move(context)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  const char* raw(std::size_t n, const char* what) {
    need(n, what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  void skip(std::size_t n, const char* what) { raw(n, what); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const { throw FormatError(context_ + ": " + msg, at); }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) fail(std::string("truncated while reading ") + what, pos_);
  }

  const std::string& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace avlit::detail
