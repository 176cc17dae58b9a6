#include "maskcls/propagation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace maskcls {

void PropagationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in [0, 1)");
  if (k <= 0) throw ValidationError("k must be positive");
  if (!(cg_tolerance > 0.0)) throw ValidationError("cg_tolerance must be positive");
  if (cg_max_iterations <= 0) throw ValidationError("cg_max_iterations must be positive");
}

SoftLabelMatrix propagate_transductive(const AffinityGraph& graph, const SoftLabelMatrix& seeds,
                                       const PropagationConfig& config, SolverReport* report) {
  config.validate();
  const Matrix& b = seeds.data;
  const Index n = graph.size();
  if (b.rows() != n) throw ValidationError("seed labels have a different row count than the graph");
  const double alpha = config.alpha;
  const auto apply = [&](const Matrix& v) -> Matrix { return v - alpha * (graph.normalized * v); };

  SoftLabelMatrix out{Matrix::Zero(n, b.cols()), LabelKind::Propagated};
  const double b_norm = b.norm();
  SolverReport local;
  if (b_norm == 0.0) {
    if (report) *report = local;
    return out;
  }

  Matrix& x = out.data;
  Matrix r = b;
  Matrix p = r;
  Eigen::RowVectorXd rr = r.colwise().squaredNorm();
  int it = 0;
  double rel = r.norm() / b_norm;
  while (rel >= config.cg_tolerance && it < config.cg_max_iterations) {
    const Matrix ap = apply(p);
    const Eigen::RowVectorXd pap = p.cwiseProduct(ap).colwise().sum();
    for (Index c = 0; c < b.cols(); ++c) {
      if (rr(c) == 0.0 || pap(c) <= 0.0) continue;
      const double step = rr(c) / pap(c);
      x.col(c) += step * p.col(c);
      r.col(c) -= step * ap.col(c);
    }
    const Eigen::RowVectorXd rr_next = r.colwise().squaredNorm();
    for (Index c = 0; c < b.cols(); ++c) {
      const double beta = rr(c) > 0.0 ? rr_next(c) / rr(c) : 0.0;
      p.col(c) = r.col(c) + beta * p.col(c);
    }
    rr = rr_next;
    ++it;
    rel = r.norm() / b_norm;
    if (rel < config.cg_tolerance) {
      // Recurrence residuals drift; confirm against the true residual and
      // restart from it if needed.
      r = b - apply(x);
      rel = r.norm() / b_norm;
      if (rel >= config.cg_tolerance) {
        p = r;
        rr = r.colwise().squaredNorm();
      }
    }
  }
  local.iterations = it;
  local.relative_residual = rel;
  if (report) *report = local;
  if (!(rel < config.cg_tolerance)) {
    throw NumericalError("conjugate gradient did not converge in " + std::to_string(it) +
                         " iterations (relative residual " + std::to_string(rel) + ")");
  }
  // Isolated nodes decouple: their equation is x_i = b_i.
  for (Index i = 0; i < n; ++i) {
    if (graph.normalized.outerIndexPtr()[i] == graph.normalized.outerIndexPtr()[i + 1]) x.row(i) = b.row(i);
  }
  return out;
}

InductiveWeights inductive_weights(const Matrix& x, const Vector& degrees, const Vector& query, int k) {
  if (degrees.size() != x.rows()) throw ValidationError("degree vector does not match stored embeddings");
  if (query.size() != x.cols()) throw ValidationError("query dimension differs from stored embeddings");
  if (std::abs(query.norm() - 1.0) > 1e-5) throw ValidationError("query embedding must be unit-norm");
  const auto nbs = nearest_neighbors(x, query, k);
  InductiveWeights w;
  w.neighbors.reserve(nbs.size());
  w.similarities.resize(static_cast<Index>(nbs.size()));
  w.weights = Vector::Zero(static_cast<Index>(nbs.size()));
  for (std::size_t i = 0; i < nbs.size(); ++i) {
    w.neighbors.push_back(nbs[i].index);
    w.similarities(static_cast<Index>(i)) = std::max(nbs[i].similarity, 0.0);
  }
  const double total = w.similarities.sum();
  if (total <= 0.0) return w;
  for (Index i = 0; i < w.weights.size(); ++i) {
    const double a = w.similarities(i);
    if (a == 0.0) continue;
    w.weights(i) = a / std::sqrt(0.5 * degrees(w.neighbors[static_cast<std::size_t>(i)]) * total);
  }
  return w;
}

Vector propagate_inductive(const Vector& prior, const InductiveWeights& weights, const Matrix& propagated,
                           double alpha) {
  if (prior.size() != propagated.cols()) throw ValidationError("prior length differs from class count");
  Vector out = prior;
  for (std::size_t i = 0; i < weights.neighbors.size(); ++i) {
    const Index row = weights.neighbors[i];
    if (row < 0 || row >= propagated.rows()) throw ValidationError("neighbour index out of range");
    out += alpha * weights.weights(static_cast<Index>(i)) * propagated.row(row).transpose();
  }
  return out;
}

Vector propagate_inductive_l1(const Vector& prior, const InductiveWeights& weights, const Matrix& propagated,
                              double alpha) {
  if (prior.size() != propagated.cols()) throw ValidationError("prior length differs from class count");
  Vector out = prior;
  const double total = weights.similarities.sum();
  if (total <= 0.0) return out;
  for (std::size_t i = 0; i < weights.neighbors.size(); ++i) {
    out += alpha * (weights.similarities(static_cast<Index>(i)) / total) *
           propagated.row(weights.neighbors[i]).transpose();
  }
  return out;
}

Vector propagate_inductive_exact(const Matrix& x, const Matrix& seeds, const Vector& prior, const Vector& query,
                                 const PropagationConfig& config, Index max_size) {
  config.validate();
  const Index n = x.rows();
  if (n > max_size) {
    throw ValidationError("exact inductive oracle is capped at N=" + std::to_string(max_size));
  }
  if (seeds.rows() != n || prior.size() != seeds.cols() || query.size() != x.cols()) {
    throw ValidationError("exact inductive oracle inputs have inconsistent shapes");
  }
  const Index total = n + 1;
  if (total <= config.k) throw ValidationError("exact oracle needs N + 1 > k");

  Matrix xbar(total, x.cols());
  xbar.topRows(n) = x;
  xbar.row(n) = query.transpose();
  const Matrix gram = xbar * xbar.transpose();

  Matrix s = Matrix::Zero(total, total);
  std::vector<Index> order(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return gram(i, a) > gram(i, b); });
    int taken = 0;
    for (Index j : order) {
      if (taken == config.k) break;
      if (j == i) continue;
      s(i, j) = std::max(gram(i, j), 0.0);
      ++taken;
    }
  }
  const Matrix sym = s + s.transpose();
  Vector degree = sym.rowwise().sum();
  degree = degree.cwiseMax(kDegreeFloor);
  const Vector inv_sqrt = degree.array().rsqrt();
  const Matrix normalized = inv_sqrt.asDiagonal() * sym * inv_sqrt.asDiagonal();
  const Matrix system = Matrix::Identity(total, total) - config.alpha * normalized;

  Matrix rhs(total, seeds.cols());
  rhs.topRows(n) = seeds;
  rhs.row(n) = prior.transpose();
  const Matrix solution = system.partialPivLu().solve(rhs);
  return solution.row(n).transpose();
}

SoftLabelMatrix supplement(const Matrix& labels, std::span<const std::uint8_t> labeled, const Matrix& scores,
                           SupervisionType type, double filter_constant) {
  if (labels.rows() != scores.rows() || labels.cols() != scores.cols()) {
    throw ValidationError("supervision and scores must have the same shape");
  }
  check_finite(scores, "classification scores");
  SoftLabelMatrix out{Matrix(labels.rows(), labels.cols()), LabelKind::Pseudo};
  switch (type) {
    case SupervisionType::Full:
      out.data = labels;
      break;
    case SupervisionType::Semi: {
      if (labeled.size() != static_cast<std::size_t>(labels.rows())) {
        throw ValidationError("semi supervision needs one labeled flag per row");
      }
      for (Index i = 0; i < labels.rows(); ++i) {
        if (labeled[static_cast<std::size_t>(i)]) {
          out.data.row(i) = labels.row(i);
        } else {
          out.data.row(i) = softmax(scores.row(i).transpose()).transpose();
        }
      }
      break;
    }
    case SupervisionType::Weak: {
      for (Index i = 0; i < labels.rows(); ++i) {
        if (labels.row(i).sum() <= 0.0) {
          throw ValidationError("weak supervision row " + std::to_string(i) + " has no image-level label");
        }
        const Vector allowed = labels.row(i).transpose();
        const Vector filtered = scores.row(i).transpose().cwiseProduct(allowed) -
                                filter_constant * (Vector::Ones(allowed.size()) - allowed);
        out.data.row(i) = softmax(filtered).transpose();
      }
      break;
    }
    case SupervisionType::OpenVocabulary:
      throw ValidationError("open-vocabulary data has no supervision to supplement");
  }
  return out;
}

Matrix scores_from_propagated(const Matrix& propagated) {
  Matrix out(propagated.rows(), propagated.cols());
  constexpr double kFloor = 1e-300;
  for (Index i = 0; i < propagated.rows(); ++i) {
    const Eigen::RowVectorXd row = propagated.row(i).cwiseMax(0.0);
    const double sum = row.sum();
    if (sum <= 0.0) {
      out.row(i).setZero();
      continue;
    }
    out.row(i) = (row / sum).cwiseMax(kFloor).array().log();
  }
  return out;
}

}  // namespace maskcls
