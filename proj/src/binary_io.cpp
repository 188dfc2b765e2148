#include "meda/binary_io.hpp"

#include "meda/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace meda::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void ByteWriter::put_bytes(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

void ByteWriter::put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

void ByteWriter::put_u32(std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf_.insert(buf_.end(), b, b + 4);
}

void ByteWriter::put_u64(std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf_.insert(buf_.end(), b, b + 8);
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_u32_be(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) put_u8(static_cast<std::uint8_t>(v >> shift));
}

void ByteReader::fail(const std::string& what) const {
  fail_(what + " (byte offset " + std::to_string(pos_) + ")");
  throw FormatError(what);  // fail_ is expected to throw; guard anyway
}

void ByteReader::need(std::size_t n, std::string_view field) const {
  if (remaining() < n) fail("truncated while reading " + std::string(field));
}

std::string ByteReader::get_bytes(std::size_t n, std::string_view field) {
  need(n, field);
  std::string out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::get_u8(std::string_view field) {
  need(1, field);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::get_u32(std::string_view field) {
  need(4, field);
  std::uint32_t v;
  std::memcpy(&v, data_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64(std::string_view field) {
  need(8, field);
  std::uint64_t v;
  std::memcpy(&v, data_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double ByteReader::get_f64(std::string_view field) { return std::bit_cast<double>(get_u64(field)); }

std::uint32_t ByteReader::get_u32_be(std::string_view field) {
  need(4, field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + i]);
  pos_ += 4;
  return v;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace meda::io
