#pragma once

// Little-endian byte (de)serialization shared by the checkpoint and index
// formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "gridseek/error.hpp"

namespace gridseek {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char> take() { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

// Every read past the end throws `Error(kind)`.
class ByteReader {
 public:
  ByteReader(std::span<const char> data, ErrorKind kind) : data_(data), kind_(kind) {}

  void bytes(void* p, std::size_t n) {
    if (n > remaining()) throw Error(kind_, "unexpected end of data at byte " + std::to_string(pos_));
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { return read<std::uint8_t>(); }
  std::uint16_t u16() { return read<std::uint16_t>(); }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  float f32() { return read<float>(); }
  std::string str() {
    const auto n = u32();
    if (n > remaining()) throw Error(kind_, "string length " + std::to_string(n) + " exceeds remaining data");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  template <typename T>
  T read() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::span<const char> data_;
  ErrorKind kind_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

inline void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::kIo, "write failed for " + path);
}

}  // namespace gridseek
