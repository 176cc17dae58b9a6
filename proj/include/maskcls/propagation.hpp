#pragma once

#include "maskcls/graph.hpp"
#include "maskcls/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace maskcls {

struct PropagationConfig {
  double alpha = 0.9;
  int k = 50;
  double cg_tolerance = 1e-6;
  int cg_max_iterations = 1000;

  void validate() const;
};

struct SolverReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (I - alpha * S_norm) P* = seeds for all K columns jointly with
/// conjugate gradients. Rows of isolated nodes come back equal to their seed
/// rows. Throws NumericalError when the tolerance is not reached.
SoftLabelMatrix propagate_transductive(const AffinityGraph& graph, const SoftLabelMatrix& seeds,
                                       const PropagationConfig& config, SolverReport* report = nullptr);

/// Neighbour weights of one query embedding against the stored set.
struct InductiveWeights {
  std::vector<Index> neighbors;
  Vector similarities;  // a_i, clamped at zero
  Vector weights;       // a_i / sqrt(0.5 * D_ii * sum(a))
};

InductiveWeights inductive_weights(const Matrix& x, const Vector& degrees, const Vector& query, int k);

/// prior + alpha * sum_i weights_i * propagated_i.
Vector propagate_inductive(const Vector& prior, const InductiveWeights& weights, const Matrix& propagated,
                           double alpha);

/// Same aggregation with similarity weights normalized to sum one instead of
/// by degree.
Vector propagate_inductive_l1(const Vector& prior, const InductiveWeights& weights, const Matrix& propagated,
                              double alpha);

inline constexpr Index kExactOracleMaxSize = 2000;

/// Appends the query to `x`, rebuilds the kNN graph over all N+1 points,
/// solves the joint system densely and returns the query's row. Only meant
/// for small N.
Vector propagate_inductive_exact(const Matrix& x, const Matrix& seeds, const Vector& prior, const Vector& query,
                                 const PropagationConfig& config, Index max_size = kExactOracleMaxSize);

/// Builds soft pseudo-labels from supervision and per-class scores:
///  full -> labels; semi -> labeled rows kept, others softmax(scores);
///  weak -> softmax(scores * Y - c (1 - Y)) with Y the image-level multi-hot.
SoftLabelMatrix supplement(const Matrix& labels, std::span<const std::uint8_t> labeled, const Matrix& scores,
                           SupervisionType type, double filter_constant = 1e4);

/// Scores whose softmax reproduces the row-normalized propagated labels, so
/// `supplement` can consume propagation output.
Matrix scores_from_propagated(const Matrix& propagated);

}  // namespace maskcls
