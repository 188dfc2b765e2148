#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meda::io {

// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void put_bytes(std::string_view bytes);
  void put_u8(std::uint8_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_u32_be(std::uint32_t v);

  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

// Cursor over a byte buffer. Reads past the end throw the error type chosen by
// the caller through `fail`, with the byte offset in the message.
class ByteReader {
 public:
  using FailFn = void (*)(const std::string& what);

  ByteReader(std::span<const char> data, FailFn fail) : data_(data), fail_(fail) {}

  std::string get_bytes(std::size_t n, std::string_view field);
  std::uint8_t get_u8(std::string_view field);
  std::uint32_t get_u32(std::string_view field);
  std::uint64_t get_u64(std::string_view field);
  double get_f64(std::string_view field);
  std::uint32_t get_u32_be(std::string_view field);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n, std::string_view field) const;

  std::span<const char> data_;
  std::size_t pos_ = 0;
  FailFn fail_;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);

}  // namespace meda::io
