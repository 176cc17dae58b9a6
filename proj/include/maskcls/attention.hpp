#pragma once

#include "maskcls/types.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

// Last-layer attention math for turning ViT token features and a binary
// region mask into a mask embedding. Everything here is a pure function of
// its inputs.
namespace maskcls::attention {

/// Image tokens entering the last transformer layer, one row per token in
/// row-major grid order.
struct TokenGrid {
  Matrix tokens;  // l x d'
  int grid_h = 0;
  int grid_w = 0;

  Index size() const { return tokens.rows(); }
  Index dim() const { return tokens.cols(); }
  void validate() const;
};

struct LayerNorm {
  Vector gain;
  Vector bias;
  double eps = 1e-5;

  Matrix apply(const Matrix& x) const;
  static LayerNorm identity(Index dim);
};

/// Pre-attention layer norm plus the query/key/value/output projections.
/// Projections act on rows: y = x W^T + b.
struct HeadWeights {
  LayerNorm ln;
  Matrix w_q, w_k, w_v;  // width x d'
  Vector b_q, b_k, b_v;  // width
  Matrix w_p;            // d' x width
  Vector b_p;            // d'
  int head_count = 1;

  Index token_dim() const { return w_q.cols(); }
  Index width() const { return w_q.rows(); }
  void validate() const;
};

enum class UpsampleMode { Bilinear, Identity };

/// Transformer MLP block, post layer norm and projection to the joint
/// embedding space (applied token-wise).
struct FullHead {
  LayerNorm ln_mlp;
  Matrix fc1;  // hidden x d'
  Vector fc1_bias;
  Matrix fc2;  // d' x hidden
  Vector fc2_bias;
  LayerNorm ln_post;
  Matrix proj;  // d x d'
};

/// A purely linear head z -> z G^T, G is d x d'.
struct LinearHead {
  Matrix g;
};

/// Everything after the attention residual: token-wise transform followed by
/// upsampling to pixel resolution.
struct OutputHead {
  std::variant<FullHead, LinearHead> transform;
  UpsampleMode upsample = UpsampleMode::Bilinear;

  Index output_dim() const;
  Index input_dim() const;
  /// Token-wise part only: l x d' -> l x d.
  Matrix apply_tokens(const Matrix& z) const;
  void validate(Index token_dim) const;
};

/// A pixel mask together with its token-level footprint and attention bias.
struct MaskPlan {
  std::vector<std::uint8_t> pixel_mask;  // H x W, row-major
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> token_mask;  // l
  int grid_h = 0;
  int grid_w = 0;
  double bias_constant = 1e4;

  /// B_ij = (m_i and m_j) or i == j.
  bool allowed(Index i, Index j) const { return i == j || (token_mask[i] && token_mask[j]); }
  /// Materialized binary bias matrix B.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> bias_matrix() const;
  std::int64_t pixel_area() const;
  std::int64_t token_area() const;
};

inline constexpr double kDefaultBiasConstant = 1e4;

/// Token is active when more than half of its pixel patch is covered. If no
/// token qualifies, the single best-covered token (lowest index on ties) is used.
std::vector<std::uint8_t> downsample_mask(std::span<const std::uint8_t> mask, int height, int width, int grid_h,
                                          int grid_w);

MaskPlan make_mask_plan(std::span<const std::uint8_t> mask, int height, int width, int grid_h, int grid_w,
                        double bias_constant = kDefaultBiasConstant);

struct ProjectedTokens {
  Matrix queries;  // l x width
  Matrix keys;     // l x width
  Matrix values;   // l x width, W_v(ln x)
  Matrix fused;    // l x d', W_p(W_v(ln x))
};

ProjectedTokens project_tokens(const TokenGrid& grid, const HeadWeights& weights);

/// Mask-biased intra-similarity attention:
/// 0.5 * (softmax(q q^T / s - c(1-B)) + softmax(k k^T / s - c(1-B))).
Matrix biased_attention(const Matrix& queries, const Matrix& keys, const MaskPlan& plan, double scale_divisor);

/// Same operator without any bias (B all ones).
Matrix symmetric_attention(const Matrix& queries, const Matrix& keys, double scale_divisor);

/// Plain cross attention softmax(q k^T / s).
Matrix cross_attention(const Matrix& queries, const Matrix& keys, double scale_divisor);

/// Separable interpolation from a token grid to the pixel raster.
class Upsampler {
 public:
  Upsampler(int grid_h, int grid_w, int height, int width, UpsampleMode mode);

  /// grid values (l) -> pixel values (H*W).
  Vector upsample(const Vector& grid_values) const;
  /// Adjoint: pixel weights (H*W) -> token weights (l); mask^T U(f) == adjoint(mask)^T f.
  Vector adjoint(const Vector& pixel_weights) const;

 private:
  struct Tap {
    int lo, hi;
    double w_lo, w_hi;
  };
  static std::vector<Tap> axis_taps(int in, int out, UpsampleMode mode);

  int grid_h_, grid_w_, height_, width_;
  std::vector<Tap> rows_, cols_;
};

/// Average in-mask affinity upsampled to pixels and restricted to the mask.
Vector average_affinity(const Matrix& attention, const MaskPlan& plan, UpsampleMode mode);

/// Per-pixel cosine between the normalized head output of x + x_f and a text
/// embedding, zero outside the mask. Returned as an H x W matrix.
Matrix similarity_map(const TokenGrid& grid, const HeadWeights& weights, const OutputHead& head,
                      const Vector& text_row, const MaskPlan& plan);

enum class PoolingVariant {
  /// Unbiased intra-similarity attention, mean pooled over the mask.
  NaiveCLIP,
  /// Original cross attention softmax(q k^T), mean pooled.
  CrossAttention,
  /// Attention removed: G(x + x_f), mean pooled.
  MaskCLIP,
  /// G(x + x_f) weighted by the upsampled average in-mask affinity.
  DBAOriginal,
  /// G(x + A_m x_f) mean pooled, single head.
  DBAApprox,
  /// G(A_m x_f) mean pooled, single head.
  DBAApproxNoResidual,
  /// G(x + biased MHSA(x)) mean pooled.
  DBAMultiHead,
};

const char* to_string(PoolingVariant variant);

struct PoolingOptions {
  /// Keep the residual x inside G for NaiveCLIP, CrossAttention, MaskCLIP and
  /// DBAOriginal. The approx variants fix it by definition.
  bool include_residual = true;
  /// Attention logits are divided by this; 0 means the token width d'.
  double scale_divisor = 0.0;
};

/// Unit-norm mask embedding. Throws ValidationError for an empty mask.
Vector pool_mask_embedding(const TokenGrid& grid, const HeadWeights& weights, const OutputHead& head,
                           const MaskPlan& plan, PoolingVariant variant, const PoolingOptions& options = {});

}  // namespace maskcls::attention
