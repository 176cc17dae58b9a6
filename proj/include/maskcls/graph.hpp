#pragma once

#include "maskcls/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace maskcls {

/// Degrees below this are clamped; the corresponding normalized rows are zero.
inline constexpr double kDegreeFloor = 1e-12;

struct Neighbor {
  Index index = 0;
  double similarity = 0.0;
};

/// Exhaustive top-k rows of `x` by inner product with `query`, most similar
/// first; ties go to the lower index. `exclude` drops one row (self).
std::vector<Neighbor> nearest_neighbors(const Matrix& x, const Vector& query, int k,
                                        std::optional<Index> exclude = std::nullopt);

/// Sparse kNN affinity S with its symmetrized degrees D and normalized form
/// D^-1/2 (S + S^T) D^-1/2.
struct AffinityGraph {
  SparseMatrix affinity;
  Vector degrees;
  SparseMatrix normalized;
  int k = 0;

  Index size() const { return affinity.rows(); }
};

/// S_ij = max(x_i . x_j, 0) for j among the k nearest neighbours of i (self
/// excluded), zero entries dropped. Rows of `x` must be unit-norm and N > k.
AffinityGraph build_knn_graph(const Matrix& x, int k, int threads = 1);

/// Derives degrees and the normalized matrix from a raw affinity matrix.
AffinityGraph graph_from_affinity(SparseMatrix affinity, int k);

/// Directory with manifest.json plus CSR triplet files and degrees.
void save_graph(const AffinityGraph& graph, const std::filesystem::path& dir);
AffinityGraph load_graph(const std::filesystem::path& dir);

}  // namespace maskcls
