#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ddp/errors.hpp"

namespace ddp {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are unsupported");

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("read failed: " + path);
  return buf;
}

inline void write_file_bytes(const std::string& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& buf) {
  write_file_bytes(path, buf.data(), buf.size());
}

inline std::string read_file_text(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

/// Appends raw little-endian records to a byte buffer.
class ByteWriter {
public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  void f32(float v) { bytes(&v, 4); }
  void f32_array(const float* data, std::size_t count) { bytes(data, 4 * count); }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
  std::vector<std::uint8_t> buf_;
};

/// Sequential bounds-checked reader over a byte buffer.
class ByteReader {
public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::string name)
      : buf_(buf), name_(std::move(name)) {}

  std::size_t remaining() const { return buf_.size() - pos_; }

  void require(std::size_t n) const {
    if (remaining() < n)
      throw TruncatedFileError(name_ + ": need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }

  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  const std::uint8_t* bytes(std::size_t n) {
    require(n);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::string text(std::size_t n) {
    const std::uint8_t* p = bytes(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  /// Consumes an 8-byte magic and checks it.
  void expect_magic(const char (&magic)[9]) {
    require(8);
    if (std::memcmp(buf_.data() + pos_, magic, 8) != 0)
      throw BadMagicError(name_ + ": bad magic, expected " + std::string(magic, 8));
    pos_ += 8;
  }

  void f32_array(float* out, std::size_t count) {
    const std::uint8_t* p = bytes(4 * count);
    std::memcpy(out, p, 4 * count);
  }

private:
  const std::vector<std::uint8_t>& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

/// Creates a directory (and parents) if needed; verifies it is usable.
inline void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec || !std::filesystem::is_directory(path))
    throw IoError("cannot create directory: " + path);
}

}  // namespace ddp
