#pragma once

#include "maskcls/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maskcls {

/// Run-length encoding of a binary raster in row-major order. Runs alternate
/// starting with a (possibly empty) run of zeros.
std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> raster);
std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, std::size_t pixel_count);

/// One class-agnostic region proposal.
struct MaskRecord {
  std::string image_id;
  int height = 0;
  int width = 0;
  std::int64_t area = 0;
  std::vector<std::uint32_t> runs;

  static MaskRecord from_raster(std::string image_id, int height, int width,
                                std::span<const std::uint8_t> raster);

  std::vector<std::uint8_t> decode() const;
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  void validate() const;

  bool operator==(const MaskRecord&) const = default;
};

/// Integer label raster; `ignore_value` marks pixels that carry no class.
struct SegmentationMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;
  std::int32_t ignore_value = 255;

  SegmentationMap() = default;
  SegmentationMap(int h, int w, std::int32_t fill, std::int32_t ignore)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill), ignore_value(ignore) {}

  std::int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const SegmentationMap&) const = default;
};

/// Class text embeddings used for zero-shot scoring.
struct TextClassifier {
  Matrix weights;  // K x d, unit rows
  std::vector<std::string> class_names;
  bool has_background = false;
  double temperature = 100.0;

  Index num_classes() const { return weights.rows(); }
  void validate() const;
};

struct ImageInfo {
  std::string id;
  int height = 0;
  int width = 0;

  bool operator==(const ImageInfo&) const = default;
};

struct Supervision {
  SupervisionType type = SupervisionType::OpenVocabulary;
  /// N x K. Full/semi: pixel proportions per mask (zero rows for unlabeled
  /// semi rows). Weak: the multi-hot label of the mask's image.
  std::optional<Matrix> labels;
  /// Semi only: 1 where the row of `labels` is ground truth.
  std::vector<std::uint8_t> labeled;
};

/// Everything known about one dataset split.
struct DatasetBundle {
  std::vector<ImageInfo> images;
  std::vector<MaskRecord> masks;
  EmbeddingMatrix embeddings;
  std::optional<TextClassifier> text;
  Supervision supervision;
  /// Per-image ground-truth rasters in `images` order.
  std::optional<std::vector<SegmentationMap>> ground_truth;
  std::int32_t ignore_value = 255;

  Index size() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }
  /// Number of classes, taken from the text classifier or the labels; 0 if neither.
  Index num_classes() const;
  Vector areas() const;
  /// Index into `images` for each mask.
  std::vector<std::size_t> image_index_of_masks() const;

  /// Throws ValidationError on any violated invariant.
  void validate() const;
};

inline constexpr int kBundleFormatVersion = 1;
inline constexpr double kUnitNormTolerance = 1e-5;

DatasetBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Length-prefixed binary stream of mask records (the masks.rle file).
std::vector<std::byte> encode_mask_stream(std::span<const MaskRecord> masks);
std::vector<MaskRecord> decode_mask_stream(std::span<const std::byte> bytes);

}  // namespace maskcls
