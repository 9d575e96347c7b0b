#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/tensor.hpp"

namespace engage {

using Fingerprint = std::array<std::uint8_t, 32>;

Fingerprint sha256(std::string_view text);
std::string to_hex(const Fingerprint& fp);

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2, kU64 = 3 };

std::size_t dtype_size(DType t) noexcept;

/// One length-prefixed record of the STGC container.
struct Record {
  std::string name;
  DType dtype = DType::kU8;
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> payload;

  template <class Real>
  static Record from_tensor(std::string name, const Tensor<Real>& t);
  static Record from_text(std::string name, std::string_view text);
  static Record from_u64(std::string name, std::uint64_t value);
  static Record from_f64(std::string name, double value);

  template <class Real>
  Tensor<Real> to_tensor() const;
  std::string to_text() const;
  std::uint64_t to_u64() const;
  double to_f64() const;
};

/// STGC layout (little-endian): "STGC", u16 version, 32-byte fingerprint,
/// u32 record count, then per record: u16 name length, name bytes,
/// u8 dtype, u8 rank, rank x u64 dims, u64 payload length, payload.
struct Container {
  Fingerprint fingerprint{};
  std::vector<Record> records;

  const Record* find(std::string_view name) const;
  const Record& get(std::string_view name) const;
  void put(Record r);
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_container(const Container& c);
Container decode_container(const std::vector<unsigned char>& bytes);

void write_container(const Container& c, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path);

}  // namespace engage
