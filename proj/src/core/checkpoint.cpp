#include "core/checkpoint.hpp"

#include <cstring>

#include <openssl/evp.h>

#include "core/binary_io.hpp"

namespace engage {
namespace {

constexpr char kMagic[4] = {'S', 'T', 'G', 'C'};

template <class Real>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<Real, float>) return DType::kF32;
  else return DType::kF64;
}

}  // namespace

Fingerprint sha256(std::string_view text) {
  Fingerprint out{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    raise(ErrorCode::kIo, "sha256 failed");
  }
  return out;
}

std::string to_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : fp) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

std::size_t dtype_size(DType t) noexcept {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
    case DType::kU64: return 8;
  }
  return 1;
}

template <class Real>
Record Record::from_tensor(std::string name, const Tensor<Real>& t) {
  Record r;
  r.name = std::move(name);
  r.dtype = dtype_of<Real>();
  for (auto d : t.shape()) r.dims.push_back(d);
  r.payload.resize(t.size() * sizeof(Real));
  std::memcpy(r.payload.data(), t.data(), r.payload.size());
  return r;
}

template <class Real>
Tensor<Real> Record::to_tensor() const {
  Shape shape(dims.begin(), dims.end());
  Tensor<Real> t(shape);
  if (dtype == dtype_of<Real>()) {
    std::memcpy(t.data(), payload.data(), payload.size());
  } else if (dtype == DType::kF32 || dtype == DType::kF64) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (dtype == DType::kF32) {
        float v;
        std::memcpy(&v, payload.data() + 4 * i, 4);
        t[i] = static_cast<Real>(v);
      } else {
        double v;
        std::memcpy(&v, payload.data() + 8 * i, 8);
        t[i] = static_cast<Real>(v);
      }
    }
  } else {
    raise(ErrorCode::kParse, "record " + name + " is not a float tensor");
  }
  return t;
}

template Record Record::from_tensor<float>(std::string, const Tensor<float>&);
template Record Record::from_tensor<double>(std::string, const Tensor<double>&);
template Tensor<float> Record::to_tensor<float>() const;
template Tensor<double> Record::to_tensor<double>() const;

Record Record::from_text(std::string name, std::string_view text) {
  Record r;
  r.name = std::move(name);
  r.dtype = DType::kU8;
  r.dims = {text.size()};
  r.payload.assign(text.begin(), text.end());
  return r;
}

Record Record::from_u64(std::string name, std::uint64_t value) {
  Record r;
  r.name = std::move(name);
  r.dtype = DType::kU64;
  r.dims = {1};
  r.payload.resize(8);
  std::memcpy(r.payload.data(), &value, 8);
  return r;
}

Record Record::from_f64(std::string name, double value) {
  Record r;
  r.name = std::move(name);
  r.dtype = DType::kF64;
  r.dims = {1};
  r.payload.resize(8);
  std::memcpy(r.payload.data(), &value, 8);
  return r;
}

std::string Record::to_text() const {
  require(dtype == DType::kU8, ErrorCode::kParse, "record " + name + " is not text");
  return std::string(payload.begin(), payload.end());
}

std::uint64_t Record::to_u64() const {
  require(dtype == DType::kU64 && payload.size() == 8, ErrorCode::kParse,
          "record " + name + " is not a u64 scalar");
  std::uint64_t v;
  std::memcpy(&v, payload.data(), 8);
  return v;
}

double Record::to_f64() const {
  require(dtype == DType::kF64 && payload.size() == 8, ErrorCode::kParse,
          "record " + name + " is not an f64 scalar");
  double v;
  std::memcpy(&v, payload.data(), 8);
  return v;
}

const Record* Container::find(std::string_view name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const Record& Container::get(std::string_view name) const {
  const Record* r = find(name);
  if (!r) raise(ErrorCode::kParse, "checkpoint is missing record " + std::string(name));
  return *r;
}

void Container::put(Record r) {
  for (auto& existing : records) {
    if (existing.name == r.name) {
      existing = std::move(r);
      return;
    }
  }
  records.push_back(std::move(r));
}

std::vector<unsigned char> encode_container(const Container& c) {
  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put_array(c.fingerprint.data(), c.fingerprint.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.records.size()));
  for (const auto& r : c.records) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.put_bytes(r.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(r.payload.size());
    w.put_array(r.payload.data(), r.payload.size());
  }
  return w.bytes();
}

Container decode_container(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    raise(ErrorCode::kBadMagic, "not an STGC checkpoint (bad magic)");
  }
  ByteReader r(bytes);
  r.get_string(4, "magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    raise(ErrorCode::kVersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  Container c;
  r.get_array(c.fingerprint.data(), c.fingerprint.size(), "fingerprint");
  const auto count = r.get<std::uint32_t>("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const auto name_len = r.get<std::uint16_t>("record name length");
    rec.name = r.get_string(name_len, "record name");
    const auto dtype = r.get<std::uint8_t>("dtype of " + rec.name);
    if (dtype > static_cast<std::uint8_t>(DType::kU64)) {
      raise(ErrorCode::kParse, "record " + rec.name + " has unknown dtype " + std::to_string(dtype));
    }
    rec.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>("rank of " + rec.name);
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.get<std::uint64_t>("dims of " + rec.name));
      elements *= rec.dims.back();
    }
    const auto length = r.get<std::uint64_t>("payload length of " + rec.name);
    if (length != elements * dtype_size(rec.dtype)) {
      raise(ErrorCode::kParse, "record " + rec.name + " declares " + std::to_string(length) +
                                   " payload bytes but its shape needs " +
                                   std::to_string(elements * dtype_size(rec.dtype)));
    }
    if (length > r.remaining()) {
      raise(ErrorCode::kTruncated, "truncated payload of record " + rec.name);
    }
    rec.payload.resize(length);
    r.get_array(rec.payload.data(), length, "payload of " + rec.name);
    c.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) raise(ErrorCode::kParse, "trailing bytes after checkpoint records");
  return c;
}

void write_container(const Container& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace engage
