#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <string>

namespace maskcls {

using Index = Eigen::Index;

/// Dense row-major matrix used for embeddings, soft labels and weights.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Stacked L2-normalized mask embeddings, one row per mask (N x d).
using EmbeddingMatrix = Matrix;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: missing files, bad checksums, inconsistent shapes,
/// non-finite values, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (solver did not converge, loss diverged).
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class SupervisionType { Full, Semi, Weak, OpenVocabulary };

std::string to_string(SupervisionType type);
SupervisionType parse_supervision(const std::string& text);

/// Which stage of the pipeline produced a soft label matrix.
enum class LabelKind { Supervision, Pseudo, ProbeRefined, Propagated, Prior };

/// N x K non-negative soft labels. Rows of Supervision/Pseudo/ProbeRefined
/// matrices lie in the simplex (or are all-zero for unlabeled supervision
/// rows); Propagated rows are unnormalized.
struct SoftLabelMatrix {
  Matrix data;
  LabelKind kind = LabelKind::Pseudo;

  Index rows() const { return data.rows(); }
  Index classes() const { return data.cols(); }
};

/// Throws ValidationError when a row of `labels` is neither in the simplex
/// (within `tolerance`) nor, if `allow_zero_rows`, exactly zero.
void check_simplex_rows(const Matrix& labels, double tolerance, bool allow_zero_rows);

/// Throws ValidationError naming the first non-finite entry.
void check_finite(const Matrix& m, const std::string& what);

/// Row-wise L2 normalization. Throws ValidationError naming the first zero row.
Matrix normalize_rows(const Matrix& m);

/// Throws ValidationError unless every row has unit norm within `tolerance`.
void check_unit_rows(const Matrix& m, double tolerance, const std::string& what);

/// Numerically stable softmax of one row.
Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

/// Index of the largest entry; ties resolve to the lower index.
Index argmax(const Vector& v);

}  // namespace maskcls
