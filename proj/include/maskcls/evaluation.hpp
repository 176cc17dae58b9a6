#pragma once

#include "maskcls/bundle.hpp"
#include "maskcls/tensor_io.hpp"
#include "maskcls/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maskcls {

/// One labelled mask to paint.
struct RasterItem {
  const MaskRecord* mask = nullptr;
  std::int32_t label = 0;
  double confidence = 0.0;
};

/// Paints masks into an H x W map. Where masks overlap the higher confidence
/// wins, then the smaller area, then the earlier item. Pixels covered by no
/// mask receive `uncovered`.
SegmentationMap rasterize(std::span<const RasterItem> items, int height, int width, std::int32_t uncovered,
                          std::int32_t ignore_value);

/// Pixel counts indexed [ground truth][prediction]. Ground-truth pixels whose
/// prediction is the ignore value are counted in `unassigned`.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Index classes);

  /// Accumulates one image; ground-truth ignore pixels are skipped.
  void add(const SegmentationMap& pred, const SegmentationMap& gt);
  void merge(const ConfusionMatrix& other);

  Index classes() const { return static_cast<Index>(unassigned_.size()); }
  std::int64_t count(Index gt, Index pred) const { return counts_[static_cast<std::size_t>(gt * classes() + pred)]; }
  std::int64_t unassigned(Index gt) const { return unassigned_[static_cast<std::size_t>(gt)]; }
  std::int64_t total() const;

 private:
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> unassigned_;
};

struct IouResult {
  std::vector<double> per_class;  // NaN where the class is absent from both maps
  std::vector<std::uint8_t> present;
  double miou = 0.0;
};

/// IoU_c = TP / (TP + FP + FN); classes absent from both maps are excluded
/// from the mean.
IouResult iou_from_confusion(const ConfusionMatrix& cm);
IouResult miou(const SegmentationMap& pred, const SegmentationMap& gt, Index classes);

struct F1Result {
  std::vector<double> per_class;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::int64_t> support;  // ground-truth mask count per class
  double macro_f1 = 0.0;
};

/// Per-class F1 = 2TP / (2TP + FP + FN) over mask instances; the macro average
/// runs over classes that occur in `gt`.
F1Result mask_f1(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, Index classes);

/// Majority ground-truth class under the mask, ties to the lower class.
/// Throws ValidationError when the mask only covers ignore pixels.
std::int32_t mask_gt_label(const MaskRecord& mask, const SegmentationMap& gt);

/// Ground-truth label per mask of a bundle, -1 where the mask covers only
/// ignore pixels. Throws if the bundle has no ground truth.
std::vector<std::int32_t> bundle_mask_labels(const DatasetBundle& bundle);

Json metrics_json(const IouResult& iou, const F1Result& f1, const std::vector<std::string>& class_names);
std::string metrics_csv(const IouResult& iou, const F1Result& f1, const std::vector<std::string>& class_names);

}  // namespace maskcls
