#include "maskcls/graph.hpp"

#include "maskcls/parallel.hpp"
#include "maskcls/tensor_io.hpp"

#include <algorithm>
#include <cmath>

namespace maskcls {

std::vector<Neighbor> nearest_neighbors(const Matrix& x, const Vector& query, int k,
                                        std::optional<Index> exclude) {
  if (query.size() != x.cols()) throw ValidationError("query dimension differs from stored embeddings");
  const Vector sims = x * query;
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(x.rows()));
  for (Index j = 0; j < x.rows(); ++j) {
    if (exclude && *exclude == j) continue;
    all.push_back({j, sims(j)});
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), all.size());
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
  all.resize(take);
  return all;
}

AffinityGraph graph_from_affinity(SparseMatrix affinity, int k) {
  if (affinity.rows() != affinity.cols()) throw ValidationError("affinity matrix must be square");
  AffinityGraph g;
  g.k = k;
  g.affinity = std::move(affinity);
  g.affinity.makeCompressed();
  const SparseMatrix sym = SparseMatrix(g.affinity.transpose()) + g.affinity;
  g.degrees = sym * Vector::Ones(sym.cols());
  for (Index i = 0; i < g.degrees.size(); ++i) g.degrees(i) = std::max(g.degrees(i), kDegreeFloor);
  const Vector inv_sqrt = g.degrees.array().rsqrt();
  g.normalized = inv_sqrt.asDiagonal() * sym * inv_sqrt.asDiagonal();
  g.normalized.makeCompressed();
  return g;
}

AffinityGraph build_knn_graph(const Matrix& x, int k, int threads) {
  const Index n = x.rows();
  if (k <= 0) throw ValidationError("k must be positive");
  if (n <= k) throw ValidationError("kNN graph needs N > k (N=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  check_finite(x, "embeddings");
  check_unit_rows(x, 1e-5, "embeddings");

  std::vector<std::vector<Neighbor>> rows(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    rows[i] = nearest_neighbors(x, x.row(static_cast<Index>(i)).transpose(), k, static_cast<Index>(i));
  });

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) {
    for (const auto& nb : rows[static_cast<std::size_t>(i)]) {
      if (nb.similarity > 0.0) triplets.emplace_back(i, nb.index, nb.similarity);
    }
  }
  SparseMatrix s(n, n);
  s.setFromTriplets(triplets.begin(), triplets.end());
  return graph_from_affinity(std::move(s), k);
}

void save_graph(const AffinityGraph& graph, const std::filesystem::path& dir) {
  TensorWriter writer(dir);
  const SparseMatrix& s = graph.affinity;
  const Index n = s.rows();
  std::vector<std::int64_t> indptr(s.outerIndexPtr(), s.outerIndexPtr() + n + 1);
  std::vector<std::int64_t> indices(s.innerIndexPtr(), s.innerIndexPtr() + s.nonZeros());
  const Vector data = Eigen::Map<const Vector>(s.valuePtr(), s.nonZeros());
  writer.write_i64("indptr", "indptr.i64", indptr);
  writer.write_i64("indices", "indices.i64", indices);
  writer.write_vector("data", "data.f64", data, DType::F64);
  writer.write_vector("degrees", "degrees.f64", graph.degrees, DType::F64);
  Json manifest;
  manifest["version"] = 1;
  manifest["kind"] = "knn-affinity-graph";
  manifest["N"] = n;
  manifest["k"] = graph.k;
  manifest["files"] = writer.file_table();
  write_json_file(dir / "manifest.json", manifest);
}

AffinityGraph load_graph(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  try {
    const TensorReader reader(dir, manifest.at("files"));
    const auto n = manifest.at("N").get<Index>();
    const int k = manifest.at("k").get<int>();
    const auto indptr = reader.i64("indptr");
    const auto indices = reader.i64("indices");
    const Vector data = reader.vector("data");
    if (static_cast<Index>(indptr.size()) != n + 1 || indptr.front() != 0 ||
        indptr.back() != static_cast<std::int64_t>(indices.size()) ||
        static_cast<Index>(indices.size()) != data.size()) {
      throw ValidationError("graph CSR arrays are inconsistent");
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (Index i = 0; i < n; ++i) {
      const auto begin = indptr[static_cast<std::size_t>(i)];
      const auto end = indptr[static_cast<std::size_t>(i) + 1];
      if (end < begin || end - begin > k) throw ValidationError("graph row " + std::to_string(i) + " is malformed");
      for (auto p = begin; p < end; ++p) {
        const auto j = indices[static_cast<std::size_t>(p)];
        if (j < 0 || j >= n || j == i || data(p) < 0.0) {
          throw ValidationError("graph entry in row " + std::to_string(i) + " is invalid");
        }
        triplets.emplace_back(i, j, data(p));
      }
    }
    SparseMatrix s(n, n);
    s.setFromTriplets(triplets.begin(), triplets.end());
    AffinityGraph g = graph_from_affinity(std::move(s), k);
    const Vector stored = reader.vector("degrees");
    if (stored.size() != n || (stored - g.degrees).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + stored.cwiseAbs().maxCoeff())) {
      throw ValidationError("stored degrees disagree with the affinity matrix");
    }
    return g;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed graph manifest: ") + ex.what());
  }
}

}  // namespace maskcls
