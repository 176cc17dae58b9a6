#pragma once

#include "maskcls/bundle.hpp"
#include "maskcls/graph.hpp"
#include "maskcls/types.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace maskcls::testing {

/// Removes its directory on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols);
Matrix random_unit_rows(std::mt19937_64& rng, Index rows, Index cols);
/// Float-representable values so f32 storage round-trips exactly.
Matrix random_float_unit_rows(std::mt19937_64& rng, Index rows, Index cols);
Matrix random_simplex_rows(std::mt19937_64& rng, Index rows, Index cols);

/// Unit-norm points drawn around `classes` random unit centres.
struct Clusters {
  Matrix centers;  // K x d, unit rows
  Matrix points;   // N x d, unit rows
  std::vector<std::int32_t> labels;
};

Clusters make_clusters(std::mt19937_64& rng, Index n, Index dim, Index classes, double spread);
/// Extra points around existing centres.
Clusters sample_clusters(std::mt19937_64& rng, const Matrix& centers, Index n, double spread);

Matrix one_hot(const std::vector<std::int32_t>& labels, Index classes);
/// Replaces `rate` of the labels (exactly round(rate * N) of them, chosen at
/// random) by a different random class.
std::vector<std::int32_t> flip_labels(std::mt19937_64& rng, const std::vector<std::int32_t>& labels, Index classes,
                                      double rate);

/// Dense reference for (I - alpha S_norm) P = seeds.
Matrix dense_propagation(const AffinityGraph& graph, const Matrix& seeds, double alpha);
/// Brute-force kNN affinity (clamped, self excluded, lower index on ties).
Matrix brute_force_affinity(const Matrix& x, int k);

/// Unit vectors at the given angles (degrees) in the plane.
Matrix angle_rows(const std::vector<double>& degrees);

struct Dominance {
  double degree_normalized = 0.0;
  double l1 = 0.0;
};

/// Appends m - 1 copies of row `dup` to `base`, builds the complete kNN graph
/// and returns the weight on all copies of `dup` divided by the weight on the
/// remaining rows, for degree-normalized and for L1 weights.
Dominance duplicate_dominance(const Matrix& base, Index dup, int m, const Vector& query);

struct BundleSpec {
  SupervisionType supervision = SupervisionType::Weak;
  int images = 50;
  int classes = 3;
  int dim = 8;
  double spread = 0.35;
  double text_noise = 0.6;
  bool has_background = false;
  double labeled_fraction = 0.3;  // semi only
  std::uint64_t seed = 7;
};

/// Synthetic split: every 8x8 image holds two classes over four quadrant
/// masks, ground truth painted from the quadrants, embeddings drawn around
/// class centres and a noisy text classifier.
DatasetBundle make_bundle(const BundleSpec& spec);

}  // namespace maskcls::testing
