#pragma once

#include "maskcls/types.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace maskcls {

using Json = nlohmann::ordered_json;

enum class DType { F32, F64, U8, I32, I64 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& text);
std::size_t dtype_size(DType dtype);

std::string sha256_hex(std::span<const std::byte> bytes);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

/// Entry of a manifest file table: where a tensor lives and how to check it.
struct TensorEntry {
  std::string path;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::string sha256;

  std::int64_t element_count() const;
  Json to_json() const;
  static TensorEntry from_json(const Json& j);
};

/// Writes raw little-endian tensors into one directory and records them in a
/// file table suitable for a manifest.
class TensorWriter {
 public:
  explicit TensorWriter(std::filesystem::path dir);

  void write_matrix(const std::string& name, const std::string& file, const Matrix& m, DType dtype);
  void write_vector(const std::string& name, const std::string& file, const Vector& v, DType dtype);
  void write_u8(const std::string& name, const std::string& file, std::span<const std::uint8_t> values);
  void write_i32(const std::string& name, const std::string& file, std::span<const std::int32_t> values);
  void write_i64(const std::string& name, const std::string& file, std::span<const std::int64_t> values);
  /// Opaque blob (e.g. RLE stream); shape is the byte count.
  void write_blob(const std::string& name, const std::string& file, std::span<const std::byte> bytes);

  const Json& file_table() const { return table_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void record(const std::string& name, const std::string& file, DType dtype,
              std::vector<std::int64_t> shape, std::span<const std::byte> bytes);

  std::filesystem::path dir_;
  Json table_ = Json::object();
};

/// Reads tensors listed in a file table, verifying size and sha256.
class TensorReader {
 public:
  TensorReader(std::filesystem::path dir, Json file_table);

  bool has(const std::string& name) const;
  const TensorEntry& entry(const std::string& name) const;

  /// Floating tensor of rank 1 or 2; rank 1 reads as a column (n x 1).
  Matrix matrix(const std::string& name) const;
  Vector vector(const std::string& name) const;
  std::vector<std::uint8_t> u8(const std::string& name) const;
  std::vector<std::int32_t> i32(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;
  std::vector<std::byte> blob(const std::string& name) const;

 private:
  std::vector<std::byte> verified_bytes(const TensorEntry& e) const;

  std::filesystem::path dir_;
  std::vector<std::pair<std::string, TensorEntry>> entries_;
};

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace maskcls
