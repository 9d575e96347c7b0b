#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "core/error.hpp"

namespace engage {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(const T* values, std::size_t count) {
    const auto* p = reinterpret_cast<const unsigned char*>(values);
    bytes_.insert(bytes_.end(), p, p + sizeof(T) * count);
  }

  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

/// Bounds-checked cursor over a byte buffer. Reading past the end raises
/// ErrorCode::kTruncated.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(std::string_view what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void get_array(T* out, std::size_t count, std::string_view what) {
    need(sizeof(T) * count, what);
    std::memcpy(out, bytes_.data() + pos_, sizeof(T) * count);
    pos_ += sizeof(T) * count;
  }

  std::string get_string(std::size_t length, std::string_view what) {
    need(length, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), length);
    pos_ += length;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n, std::string_view what) const {
    if (n > bytes_.size() - pos_) {
      raise(ErrorCode::kTruncated, "truncated while reading " + std::string(what));
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       const void* data, std::size_t size);

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::vector<unsigned char>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view text) {
  write_file_atomic(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path);

}  // namespace engage
