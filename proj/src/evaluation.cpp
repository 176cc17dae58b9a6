#include "maskcls/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace maskcls {

SegmentationMap rasterize(std::span<const RasterItem> items, int height, int width, std::int32_t uncovered,
                          std::int32_t ignore_value) {
  if (height <= 0 || width <= 0) throw ValidationError("raster size must be positive");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const MaskRecord* m = items[i].mask;
    if (m == nullptr) throw ValidationError("raster item " + std::to_string(i) + " has no mask");
    if (m->height != height || m->width != width) {
      throw ValidationError("mask " + std::to_string(i) + " is " + std::to_string(m->height) + "x" +
                            std::to_string(m->width) + ", expected " + std::to_string(height) + "x" +
                            std::to_string(width));
    }
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (items[a].confidence != items[b].confidence) return items[a].confidence > items[b].confidence;
    if (items[a].mask->area != items[b].mask->area) return items[a].mask->area < items[b].mask->area;
    return a < b;
  });

  SegmentationMap out(height, width, uncovered, ignore_value);
  std::vector<std::uint8_t> painted(out.labels.size(), 0);
  for (std::size_t idx : order) {
    const auto& runs = items[idx].mask->runs;
    std::size_t pos = 0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (r % 2 == 1) {
        for (std::size_t p = pos; p < pos + runs[r]; ++p) {
          if (!painted[p]) {
            painted[p] = 1;
            out.labels[p] = items[idx].label;
          }
        }
      }
      pos += runs[r];
    }
  }
  return out;
}

ConfusionMatrix::ConfusionMatrix(Index classes)
    : counts_(static_cast<std::size_t>(classes * classes), 0), unassigned_(static_cast<std::size_t>(classes), 0) {
  if (classes <= 0) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const SegmentationMap& pred, const SegmentationMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size()) {
    throw ValidationError("prediction and ground truth maps differ in shape");
  }
  const Index k = classes();
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const std::int32_t g = gt.labels[p];
    if (g == gt.ignore_value) continue;
    if (g < 0 || g >= k) throw ValidationError("ground-truth label " + std::to_string(g) + " out of range");
    const std::int32_t q = pred.labels[p];
    if (q == pred.ignore_value) {
      ++unassigned_[static_cast<std::size_t>(g)];
      continue;
    }
    if (q < 0 || q >= k) throw ValidationError("predicted label " + std::to_string(q) + " out of range");
    ++counts_[static_cast<std::size_t>(g * k + q)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw ValidationError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (std::size_t i = 0; i < unassigned_.size(); ++i) unassigned_[i] += other.unassigned_[i];
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}) +
         std::accumulate(unassigned_.begin(), unassigned_.end(), std::int64_t{0});
}

IouResult iou_from_confusion(const ConfusionMatrix& cm) {
  const Index k = cm.classes();
  IouResult out;
  out.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  out.present.assign(static_cast<std::size_t>(k), 0);
  double sum = 0.0;
  int used = 0;
  for (Index c = 0; c < k; ++c) {
    const std::int64_t tp = cm.count(c, c);
    std::int64_t fn = cm.unassigned(c);
    std::int64_t fp = 0;
    for (Index o = 0; o < k; ++o) {
      if (o == c) continue;
      fn += cm.count(c, o);
      fp += cm.count(o, c);
    }
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    out.per_class[static_cast<std::size_t>(c)] = iou;
    out.present[static_cast<std::size_t>(c)] = 1;
    sum += iou;
    ++used;
  }
  out.miou = used > 0 ? sum / used : 0.0;
  return out;
}

IouResult miou(const SegmentationMap& pred, const SegmentationMap& gt, Index classes) {
  ConfusionMatrix cm(classes);
  cm.add(pred, gt);
  return iou_from_confusion(cm);
}

F1Result mask_f1(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, Index classes) {
  if (pred.size() != gt.size()) {
    throw ValidationError("got " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                          " ground-truth masks");
  }
  const auto k = static_cast<std::size_t>(classes);
  std::vector<std::int64_t> tp(k, 0), fp(k, 0), fn(k, 0);
  F1Result out;
  out.support.assign(k, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto g = gt[i];
    const auto p = pred[i];
    if (g < 0 || static_cast<std::size_t>(g) >= k) throw ValidationError("ground-truth mask label out of range");
    if (p < 0 || static_cast<std::size_t>(p) >= k) throw ValidationError("predicted mask label out of range");
    ++out.support[static_cast<std::size_t>(g)];
    if (p == g) {
      ++tp[static_cast<std::size_t>(g)];
    } else {
      ++fn[static_cast<std::size_t>(g)];
      ++fp[static_cast<std::size_t>(p)];
    }
  }
  out.per_class.assign(k, 0.0);
  out.precision.assign(k, 0.0);
  out.recall.assign(k, 0.0);
  double sum = 0.0;
  int used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (tp[c] + fp[c] > 0) out.precision[c] = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
    if (tp[c] + fn[c] > 0) out.recall[c] = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    const std::int64_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) out.per_class[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    if (out.support[c] > 0) {
      sum += out.per_class[c];
      ++used;
    }
  }
  out.macro_f1 = used > 0 ? sum / used : 0.0;
  return out;
}

std::int32_t mask_gt_label(const MaskRecord& mask, const SegmentationMap& gt) {
  if (mask.height != gt.height || mask.width != gt.width) {
    throw ValidationError("mask and ground-truth map differ in shape");
  }
  std::vector<std::int64_t> votes;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < mask.runs.size(); ++r) {
    if (r % 2 == 1) {
      for (std::size_t p = pos; p < pos + mask.runs[r]; ++p) {
        const std::int32_t g = gt.labels[p];
        if (g == gt.ignore_value) continue;
        if (g < 0) throw ValidationError("negative ground-truth label");
        if (static_cast<std::size_t>(g) >= votes.size()) votes.resize(static_cast<std::size_t>(g) + 1, 0);
        ++votes[static_cast<std::size_t>(g)];
      }
    }
    pos += mask.runs[r];
  }
  const auto best = std::max_element(votes.begin(), votes.end());
  if (best == votes.end() || *best == 0) {
    throw ValidationError("mask on image '" + mask.image_id + "' covers only ignored pixels");
  }
  return static_cast<std::int32_t>(best - votes.begin());
}

std::vector<std::int32_t> bundle_mask_labels(const DatasetBundle& bundle) {
  if (!bundle.ground_truth) throw ValidationError("bundle has no ground-truth segmentation");
  const auto owner = bundle.image_index_of_masks();
  std::vector<std::int32_t> out(bundle.masks.size(), -1);
  for (std::size_t i = 0; i < bundle.masks.size(); ++i) {
    try {
      out[i] = mask_gt_label(bundle.masks[i], (*bundle.ground_truth)[owner[i]]);
    } catch (const ValidationError&) {
      out[i] = -1;
    }
  }
  return out;
}

namespace {

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : "class_" + std::to_string(c);
}

}  // namespace

Json metrics_json(const IouResult& iou, const F1Result& f1, const std::vector<std::string>& class_names) {
  Json classes = Json::array();
  const std::size_t k = std::max(iou.per_class.size(), f1.per_class.size());
  for (std::size_t c = 0; c < k; ++c) {
    Json row;
    row["index"] = c;
    row["name"] = class_name(class_names, c);
    if (c < iou.per_class.size() && iou.present[c]) {
      row["iou"] = iou.per_class[c];
    } else {
      row["iou"] = nullptr;
    }
    if (c < f1.per_class.size()) {
      row["f1"] = f1.per_class[c];
      row["precision"] = f1.precision[c];
      row["recall"] = f1.recall[c];
      row["support"] = f1.support[c];
    }
    classes.push_back(row);
  }
  Json out;
  out["summary"] = {{"miou", iou.miou}, {"mask_macro_f1", f1.macro_f1}};
  out["classes"] = classes;
  return out;
}

std::string metrics_csv(const IouResult& iou, const F1Result& f1, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os.precision(17);
  os << "index,name,iou,f1,precision,recall,support\n";
  const std::size_t k = std::max(iou.per_class.size(), f1.per_class.size());
  for (std::size_t c = 0; c < k; ++c) {
    os << c << ',' << class_name(class_names, c) << ',';
    if (c < iou.per_class.size() && iou.present[c]) os << iou.per_class[c];
    os << ',';
    if (c < f1.per_class.size()) {
      os << f1.per_class[c] << ',' << f1.precision[c] << ',' << f1.recall[c] << ',' << f1.support[c];
    } else {
      os << ",,,";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace maskcls
