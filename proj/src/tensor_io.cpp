#include "maskcls/tensor_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

namespace maskcls {
namespace {

template <class T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFF));
  }
}

template <class T>
T get_le(const std::byte* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

std::vector<std::byte> encode_floats(const double* data, std::size_t n, DType dtype) {
  std::vector<std::byte> out;
  out.reserve(n * dtype_size(dtype));
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::F32) {
      put_le(out, static_cast<float>(data[i]));
    } else if (dtype == DType::F64) {
      put_le(out, data[i]);
    } else {
      throw ValidationError("floating tensor written with integer dtype " + to_string(dtype));
    }
  }
  return out;
}

}  // namespace

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::F32:
      return "f32";
    case DType::F64:
      return "f64";
    case DType::U8:
      return "u8";
    case DType::I32:
      return "i32";
    case DType::I64:
      return "i64";
  }
  return "?";
}

DType parse_dtype(const std::string& text) {
  if (text == "f32") return DType::F32;
  if (text == "f64") return DType::F64;
  if (text == "u8") return DType::U8;
  if (text == "i32") return DType::I32;
  if (text == "i64") return DType::I64;
  throw ValidationError("unknown dtype '" + text + "'");
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32:
    case DType::I32:
      return 4;
    case DType::F64:
    case DType::I64:
      return 8;
    case DType::U8:
      return 1;
  }
  return 0;
}

std::string sha256_hex(std::span<const std::byte> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing file: " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw ValidationError("failed to read " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

std::int64_t TensorEntry::element_count() const {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

Json TensorEntry::to_json() const {
  return Json{{"path", path}, {"dtype", to_string(dtype)}, {"shape", shape}, {"sha256", sha256}};
}

TensorEntry TensorEntry::from_json(const Json& j) {
  TensorEntry e;
  try {
    e.path = j.at("path").get<std::string>();
    e.dtype = parse_dtype(j.at("dtype").get<std::string>());
    e.shape = j.at("shape").get<std::vector<std::int64_t>>();
    e.sha256 = j.at("sha256").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed file table entry: ") + ex.what());
  }
  for (auto s : e.shape) {
    if (s < 0) throw ValidationError("negative dimension in shape of " + e.path);
  }
  return e;
}

TensorWriter::TensorWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw ValidationError("cannot create directory " + dir_.string() + ": " + ec.message());
}

void TensorWriter::record(const std::string& name, const std::string& file, DType dtype,
                          std::vector<std::int64_t> shape, std::span<const std::byte> bytes) {
  write_file_bytes(dir_ / file, bytes);
  TensorEntry e{file, dtype, std::move(shape), sha256_hex(bytes)};
  table_[name] = e.to_json();
}

void TensorWriter::write_matrix(const std::string& name, const std::string& file, const Matrix& m,
                                DType dtype) {
  const auto bytes = encode_floats(m.data(), static_cast<std::size_t>(m.size()), dtype);
  record(name, file, dtype, {m.rows(), m.cols()}, bytes);
}

void TensorWriter::write_vector(const std::string& name, const std::string& file, const Vector& v,
                                DType dtype) {
  const auto bytes = encode_floats(v.data(), static_cast<std::size_t>(v.size()), dtype);
  record(name, file, dtype, {v.size()}, bytes);
}

void TensorWriter::write_u8(const std::string& name, const std::string& file,
                            std::span<const std::uint8_t> values) {
  record(name, file, DType::U8, {static_cast<std::int64_t>(values.size())}, std::as_bytes(values));
}

void TensorWriter::write_i32(const std::string& name, const std::string& file,
                             std::span<const std::int32_t> values) {
  std::vector<std::byte> bytes;
  bytes.reserve(values.size() * 4);
  for (auto v : values) put_le(bytes, v);
  record(name, file, DType::I32, {static_cast<std::int64_t>(values.size())}, bytes);
}

void TensorWriter::write_i64(const std::string& name, const std::string& file,
                             std::span<const std::int64_t> values) {
  std::vector<std::byte> bytes;
  bytes.reserve(values.size() * 8);
  for (auto v : values) put_le(bytes, v);
  record(name, file, DType::I64, {static_cast<std::int64_t>(values.size())}, bytes);
}

void TensorWriter::write_blob(const std::string& name, const std::string& file,
                              std::span<const std::byte> bytes) {
  record(name, file, DType::U8, {static_cast<std::int64_t>(bytes.size())}, bytes);
}

TensorReader::TensorReader(std::filesystem::path dir, Json file_table) : dir_(std::move(dir)) {
  if (!file_table.is_object()) throw ValidationError("manifest file table must be an object");
  for (const auto& [name, value] : file_table.items()) {
    entries_.emplace_back(name, TensorEntry::from_json(value));
  }
}

bool TensorReader::has(const std::string& name) const {
  for (const auto& [n, e] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const TensorEntry& TensorReader::entry(const std::string& name) const {
  for (const auto& [n, e] : entries_) {
    if (n == name) return e;
  }
  throw ValidationError("manifest does not list tensor '" + name + "'");
}

std::vector<std::byte> TensorReader::verified_bytes(const TensorEntry& e) const {
  auto bytes = read_file_bytes(dir_ / e.path);
  const auto expected = static_cast<std::size_t>(e.element_count()) * dtype_size(e.dtype);
  if (bytes.size() != expected) {
    throw ValidationError("shape inconsistency in " + e.path + ": expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(bytes.size()));
  }
  if (sha256_hex(bytes) != e.sha256) throw ValidationError("checksum mismatch in " + e.path);
  return bytes;
}

Matrix TensorReader::matrix(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::F32 && e.dtype != DType::F64) {
    throw ValidationError(e.path + " is not a floating tensor");
  }
  if (e.shape.empty() || e.shape.size() > 2) {
    throw ValidationError(e.path + " must have rank 1 or 2");
  }
  const auto bytes = verified_bytes(e);
  const Index rows = e.shape[0];
  const Index cols = e.shape.size() == 2 ? e.shape[1] : 1;
  Matrix m(rows, cols);
  const std::size_t width = dtype_size(e.dtype);
  for (Index i = 0; i < m.size(); ++i) {
    const std::byte* p = bytes.data() + static_cast<std::size_t>(i) * width;
    const double v = e.dtype == DType::F32 ? static_cast<double>(get_le<float>(p)) : get_le<double>(p);
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite value in " + e.path + " at element " + std::to_string(i));
    }
    m.data()[i] = v;
  }
  return m;
}

Vector TensorReader::vector(const std::string& name) const {
  const Matrix m = matrix(name);
  if (m.cols() != 1) throw ValidationError(entry(name).path + " must be rank 1");
  return Eigen::Map<const Vector>(m.data(), m.rows());
}

std::vector<std::uint8_t> TensorReader::u8(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::U8) throw ValidationError(e.path + " must have dtype u8");
  const auto bytes = verified_bytes(e);
  std::vector<std::uint8_t> out(bytes.size());
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::int32_t> TensorReader::i32(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::I32) throw ValidationError(e.path + " must have dtype i32");
  const auto bytes = verified_bytes(e);
  std::vector<std::int32_t> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<std::int32_t>(bytes.data() + 4 * i);
  return out;
}

std::vector<std::int64_t> TensorReader::i64(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::I64) throw ValidationError(e.path + " must have dtype i64");
  const auto bytes = verified_bytes(e);
  std::vector<std::int64_t> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le<std::int64_t>(bytes.data() + 8 * i);
  return out;
}

std::vector<std::byte> TensorReader::blob(const std::string& name) const {
  return verified_bytes(entry(name));
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("invalid JSON in " + path.string() + ": " + ex.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace maskcls
