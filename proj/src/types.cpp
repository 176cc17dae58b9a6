#include "maskcls/types.hpp"

#include <cmath>

namespace maskcls {

std::string to_string(SupervisionType type) {
  switch (type) {
    case SupervisionType::Full:
      return "full";
    case SupervisionType::Semi:
      return "semi";
    case SupervisionType::Weak:
      return "weak";
    case SupervisionType::OpenVocabulary:
      return "open-vocabulary";
  }
  return "unknown";
}

SupervisionType parse_supervision(const std::string& text) {
  if (text == "full") return SupervisionType::Full;
  if (text == "semi") return SupervisionType::Semi;
  if (text == "weak") return SupervisionType::Weak;
  if (text == "open-vocabulary") return SupervisionType::OpenVocabulary;
  throw ValidationError("unknown supervision type '" + text + "'");
}

void check_simplex_rows(const Matrix& labels, double tolerance, bool allow_zero_rows) {
  for (Index i = 0; i < labels.rows(); ++i) {
    const auto row = labels.row(i);
    if (!row.allFinite() || row.minCoeff() < 0.0) {
      throw ValidationError("label row " + std::to_string(i) + " has negative or non-finite entries");
    }
    const double sum = row.sum();
    if (allow_zero_rows && sum == 0.0) continue;
    if (std::abs(sum - 1.0) > tolerance) {
      throw ValidationError("label row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

void check_finite(const Matrix& m, const std::string& what) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        throw ValidationError(what + " has a non-finite value at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm == 0.0 || !std::isfinite(norm)) {
      throw ValidationError("cannot normalize row " + std::to_string(i) + ": zero or non-finite norm");
    }
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

void check_unit_rows(const Matrix& m, double tolerance, const std::string& what) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(std::abs(norm - 1.0) <= tolerance)) {
      throw ValidationError(what + " row " + std::to_string(i) + " is not unit-norm (norm " +
                            std::to_string(norm) + ")");
    }
  }
}

Vector softmax(const Vector& logits) {
  const double peak = logits.maxCoeff();
  Vector out = (logits.array() - peak).exp().matrix();
  return out / out.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i).transpose()).transpose();
  }
  return out;
}

Index argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace maskcls
