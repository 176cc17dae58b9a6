#include "maskcls/bundle.hpp"

#include "maskcls/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

namespace maskcls {
namespace {

constexpr char kMaskMagic[4] = {'M', 'R', 'L', 'E'};
constexpr std::uint32_t kMaskStreamVersion = 1;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

class ByteCursor {
 public:
  explicit ByteCursor(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(n, '\0');
    std::memcpy(s.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ValidationError("truncated mask stream");
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::string join_lines(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    out += n;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_lines(std::span<const std::byte> bytes) {
  std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> raster) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (auto px : raster) {
    const std::uint8_t bit = px ? 1 : 0;
    if (bit != current) {
      runs.push_back(length);
      current = bit;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, std::size_t pixel_count) {
  std::vector<std::uint8_t> raster;
  raster.reserve(pixel_count);
  std::uint8_t value = 0;
  for (auto run : runs) {
    if (raster.size() + run > pixel_count) throw ValidationError("RLE runs exceed raster size");
    raster.insert(raster.end(), run, value);
    value ^= 1;
  }
  if (raster.size() != pixel_count) throw ValidationError("RLE runs do not cover the raster");
  return raster;
}

MaskRecord MaskRecord::from_raster(std::string image_id, int height, int width,
                                   std::span<const std::uint8_t> raster) {
  if (height <= 0 || width <= 0) throw ValidationError("mask dimensions must be positive");
  if (raster.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("raster size does not match mask dimensions");
  }
  MaskRecord m;
  m.image_id = std::move(image_id);
  m.height = height;
  m.width = width;
  m.runs = rle_encode(raster);
  m.area = 0;
  for (auto px : raster) m.area += px ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> MaskRecord::decode() const { return rle_decode(runs, pixel_count()); }

void MaskRecord::validate() const {
  if (height <= 0 || width <= 0) throw ValidationError("mask of image '" + image_id + "' has non-positive size");
  std::int64_t covered = 0;
  std::int64_t ones = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    covered += runs[i];
    if (i % 2 == 1) ones += runs[i];
  }
  if (covered != static_cast<std::int64_t>(pixel_count())) {
    throw ValidationError("mask of image '" + image_id + "' has RLE runs not covering its raster");
  }
  if (ones != area || area <= 0) {
    throw ValidationError("mask of image '" + image_id + "' declares area " + std::to_string(area) +
                          " but encodes " + std::to_string(ones) + " pixels");
  }
}

void TextClassifier::validate() const {
  if (weights.rows() < 2) throw ValidationError("text classifier needs at least two classes");
  if (static_cast<Index>(class_names.size()) != weights.rows()) {
    throw ValidationError("text classifier has " + std::to_string(class_names.size()) + " names for " +
                          std::to_string(weights.rows()) + " classes");
  }
  std::set<std::string> unique(class_names.begin(), class_names.end());
  if (unique.size() != class_names.size()) throw ValidationError("class names are not unique");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("text temperature must be positive");
  }
  check_finite(weights, "text classifier");
  check_unit_rows(weights, kUnitNormTolerance, "text classifier");
}

Index DatasetBundle::num_classes() const {
  if (text) return text->num_classes();
  if (supervision.labels) return supervision.labels->cols();
  return 0;
}

Vector DatasetBundle::areas() const {
  Vector a(static_cast<Index>(masks.size()));
  for (std::size_t i = 0; i < masks.size(); ++i) a(static_cast<Index>(i)) = static_cast<double>(masks[i].area);
  return a;
}

std::vector<std::size_t> DatasetBundle::image_index_of_masks() const {
  std::map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < images.size(); ++i) lookup.emplace(images[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(masks.size());
  for (const auto& m : masks) {
    auto it = lookup.find(m.image_id);
    if (it == lookup.end()) throw ValidationError("mask references unknown image '" + m.image_id + "'");
    out.push_back(it->second);
  }
  return out;
}

void DatasetBundle::validate() const {
  const Index n = embeddings.rows();
  if (n <= 0 || embeddings.cols() <= 0) throw ValidationError("bundle has an empty embedding matrix");
  if (static_cast<Index>(masks.size()) != n) {
    throw ValidationError("bundle has " + std::to_string(masks.size()) + " masks but " + std::to_string(n) +
                          " embedding rows");
  }
  check_finite(embeddings, "embeddings");
  check_unit_rows(embeddings, kUnitNormTolerance, "embeddings");

  std::set<std::string> ids;
  for (const auto& img : images) {
    if (img.height <= 0 || img.width <= 0) throw ValidationError("image '" + img.id + "' has non-positive size");
    if (!ids.insert(img.id).second) throw ValidationError("duplicate image id '" + img.id + "'");
  }
  const auto owner = image_index_of_masks();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    masks[i].validate();
    const auto& img = images[owner[i]];
    if (masks[i].height != img.height || masks[i].width != img.width) {
      throw ValidationError("mask " + std::to_string(i) + " size differs from image '" + img.id + "'");
    }
  }

  if (text) {
    text->validate();
    if (text->weights.cols() != embeddings.cols()) {
      throw ValidationError("text classifier dimension differs from embedding dimension");
    }
  }

  const Index k = num_classes();
  if (supervision.labels) {
    const Matrix& y = *supervision.labels;
    if (y.rows() != n || y.cols() != k || k < 2) {
      throw ValidationError("supervision labels must be N x K with K >= 2");
    }
    check_finite(y, "labels");
    switch (supervision.type) {
      case SupervisionType::Full:
        check_simplex_rows(y, 1e-4, false);
        break;
      case SupervisionType::Semi: {
        if (supervision.labeled.size() != static_cast<std::size_t>(n)) {
          throw ValidationError("semi supervision needs one labeled flag per mask");
        }
        for (Index i = 0; i < n; ++i) {
          const bool labeled = supervision.labeled[static_cast<std::size_t>(i)] != 0;
          const double sum = y.row(i).sum();
          if (!labeled && sum != 0.0) {
            throw ValidationError("unlabeled row " + std::to_string(i) + " must be all-zero");
          }
          if (labeled && (std::abs(sum - 1.0) > 1e-4 || y.row(i).minCoeff() < 0.0)) {
            throw ValidationError("labeled row " + std::to_string(i) + " is not a distribution");
          }
        }
        break;
      }
      case SupervisionType::Weak: {
        std::vector<std::optional<Eigen::RowVectorXd>> per_image(images.size());
        for (Index i = 0; i < n; ++i) {
          const auto row = y.row(i);
          if ((row.array() != 0.0 && row.array() != 1.0).any()) {
            throw ValidationError("weak label row " + std::to_string(i) + " must be multi-hot");
          }
          if (row.sum() == 0.0) throw ValidationError("weak label row " + std::to_string(i) + " is empty");
          auto& slot = per_image[owner[static_cast<std::size_t>(i)]];
          if (!slot) {
            slot = row;
          } else if (*slot != row) {
            throw ValidationError("weak labels differ between masks of one image (row " + std::to_string(i) + ")");
          }
        }
        break;
      }
      case SupervisionType::OpenVocabulary:
        throw ValidationError("open-vocabulary bundles carry no supervision labels");
    }
  }
  if (supervision.type != SupervisionType::Semi && !supervision.labeled.empty()) {
    throw ValidationError("labeled flags are only valid for semi supervision");
  }
  if (supervision.type == SupervisionType::Semi && supervision.labels == std::nullopt &&
      !supervision.labeled.empty()) {
    throw ValidationError("labeled flags given without labels");
  }

  if (ground_truth) {
    if (ground_truth->size() != images.size()) throw ValidationError("need one ground-truth map per image");
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& gt = (*ground_truth)[i];
      if (gt.height != images[i].height || gt.width != images[i].width ||
          gt.labels.size() != static_cast<std::size_t>(gt.height) * gt.width) {
        throw ValidationError("ground-truth map of image '" + images[i].id + "' has the wrong size");
      }
      for (auto v : gt.labels) {
        if (v != ignore_value && (v < 0 || v >= k)) {
          throw ValidationError("ground-truth label " + std::to_string(v) + " out of range in image '" +
                                images[i].id + "'");
        }
      }
    }
  }
}

std::vector<std::byte> encode_mask_stream(std::span<const MaskRecord> masks) {
  std::vector<std::byte> out;
  for (char c : kMaskMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kMaskStreamVersion);
  put_u32(out, static_cast<std::uint32_t>(masks.size()));
  for (const auto& m : masks) {
    std::vector<std::byte> rec;
    put_u32(rec, static_cast<std::uint32_t>(m.image_id.size()));
    for (char c : m.image_id) rec.push_back(static_cast<std::byte>(c));
    put_u32(rec, static_cast<std::uint32_t>(m.height));
    put_u32(rec, static_cast<std::uint32_t>(m.width));
    put_u32(rec, static_cast<std::uint32_t>(m.area));
    put_u32(rec, static_cast<std::uint32_t>(m.runs.size()));
    for (auto r : m.runs) put_u32(rec, r);
    put_u32(out, static_cast<std::uint32_t>(rec.size()));
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

std::vector<MaskRecord> decode_mask_stream(std::span<const std::byte> bytes) {
  ByteCursor cur(bytes);
  if (cur.text(4) != std::string(kMaskMagic, 4)) throw ValidationError("masks.rle has a bad magic number");
  if (cur.u32() != kMaskStreamVersion) throw ValidationError("unsupported masks.rle version");
  const std::uint32_t count = cur.u32();
  std::vector<MaskRecord> masks;
  masks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t length = cur.u32();
    const std::size_t start = cur.position();
    MaskRecord m;
    m.image_id = cur.text(cur.u32());
    m.height = static_cast<int>(cur.u32());
    m.width = static_cast<int>(cur.u32());
    m.area = cur.u32();
    const std::uint32_t n_runs = cur.u32();
    m.runs.resize(n_runs);
    for (auto& r : m.runs) r = cur.u32();
    if (cur.position() - start != length) {
      throw ValidationError("mask record " + std::to_string(i) + " length prefix mismatch");
    }
    masks.push_back(std::move(m));
  }
  if (!cur.done()) throw ValidationError("trailing bytes after mask records");
  return masks;
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  TensorWriter writer(dir);
  writer.write_matrix("embeddings", "embeddings.f32", bundle.embeddings, DType::F32);
  writer.write_vector("areas", "areas.f32", bundle.areas(), DType::F32);
  const auto stream = encode_mask_stream(bundle.masks);
  writer.write_blob("masks", "masks.rle", stream);
  if (bundle.text) {
    writer.write_matrix("text", "text.f32", bundle.text->weights, DType::F32);
    const std::string names = join_lines(bundle.text->class_names);
    writer.write_blob("classes", "classes.txt", std::as_bytes(std::span(names.data(), names.size())));
  }
  if (bundle.supervision.labels) {
    writer.write_matrix("labels", "labels.f32", *bundle.supervision.labels, DType::F32);
  }
  if (bundle.supervision.type == SupervisionType::Semi && !bundle.supervision.labeled.empty()) {
    writer.write_u8("labeled", "labeled.u8", bundle.supervision.labeled);
  }
  if (bundle.ground_truth) {
    std::vector<std::int32_t> flat;
    for (const auto& gt : *bundle.ground_truth) flat.insert(flat.end(), gt.labels.begin(), gt.labels.end());
    writer.write_i32("ground_truth", "ground_truth.i32", flat);
  }

  Json images = Json::array();
  for (const auto& img : bundle.images) {
    images.push_back({{"id", img.id}, {"height", img.height}, {"width", img.width}});
  }
  Json manifest;
  manifest["version"] = kBundleFormatVersion;
  manifest["N"] = bundle.size();
  manifest["d"] = bundle.dim();
  manifest["K"] = bundle.num_classes();
  manifest["supervision"] = to_string(bundle.supervision.type);
  manifest["ignore_value"] = bundle.ignore_value;
  if (bundle.text) {
    manifest["text"] = {{"has_background", bundle.text->has_background},
                        {"temperature", bundle.text->temperature}};
  }
  manifest["images"] = std::move(images);
  manifest["files"] = writer.file_table();
  write_json_file(dir / "manifest.json", manifest);
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  DatasetBundle b;
  try {
    if (manifest.at("version").get<int>() != kBundleFormatVersion) {
      throw ValidationError("unsupported bundle version");
    }
    const TensorReader reader(dir, manifest.at("files"));
    const auto n = manifest.at("N").get<Index>();
    const auto d = manifest.at("d").get<Index>();
    const auto k = manifest.at("K").get<Index>();
    b.supervision.type = parse_supervision(manifest.at("supervision").get<std::string>());
    b.ignore_value = manifest.value("ignore_value", 255);
    for (const auto& img : manifest.at("images")) {
      b.images.push_back({img.at("id").get<std::string>(), img.at("height").get<int>(), img.at("width").get<int>()});
    }

    b.embeddings = reader.matrix("embeddings");
    if (b.embeddings.rows() != n || b.embeddings.cols() != d) {
      throw ValidationError("manifest declares embeddings " + std::to_string(n) + "x" + std::to_string(d) +
                            " but embeddings.f32 holds " + std::to_string(b.embeddings.rows()) + "x" +
                            std::to_string(b.embeddings.cols()));
    }
    b.masks = decode_mask_stream(reader.blob("masks"));
    const Vector areas = reader.vector("areas");
    if (areas.size() != n || static_cast<Index>(b.masks.size()) != n) {
      throw ValidationError("manifest declares N=" + std::to_string(n) + " but mask files disagree");
    }
    for (Index i = 0; i < n; ++i) {
      if (areas(i) != static_cast<double>(b.masks[static_cast<std::size_t>(i)].area)) {
        throw ValidationError("areas.f32 disagrees with mask " + std::to_string(i));
      }
    }

    if (reader.has("text")) {
      TextClassifier text;
      text.weights = reader.matrix("text");
      text.class_names = split_lines(reader.blob("classes"));
      const Json meta = manifest.value("text", Json::object());
      text.has_background = meta.value("has_background", false);
      text.temperature = meta.value("temperature", 100.0);
      b.text = std::move(text);
    }
    if (reader.has("labels")) b.supervision.labels = reader.matrix("labels");
    if (reader.has("labeled")) b.supervision.labeled = reader.u8("labeled");
    if (b.num_classes() != k) {
      throw ValidationError("manifest declares K=" + std::to_string(k) + " but tensors hold " +
                            std::to_string(b.num_classes()) + " classes");
    }
    if (reader.has("ground_truth")) {
      const auto flat = reader.i32("ground_truth");
      std::vector<SegmentationMap> maps;
      std::size_t offset = 0;
      for (const auto& img : b.images) {
        SegmentationMap map(img.height, img.width, b.ignore_value, b.ignore_value);
        const std::size_t count = map.labels.size();
        if (offset + count > flat.size()) throw ValidationError("ground_truth.i32 is too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(offset + count), map.labels.begin());
        offset += count;
        maps.push_back(std::move(map));
      }
      if (offset != flat.size()) throw ValidationError("ground_truth.i32 has trailing pixels");
      b.ground_truth = std::move(maps);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed manifest: ") + ex.what());
  }
  b.validate();
  return b;
}

}  // namespace maskcls
