#include "maskcls/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maskcls::attention {
namespace {

Matrix affine_rows(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

Matrix quick_gelu(const Matrix& x) {
  return (x.array() / (1.0 + (-1.702 * x.array()).exp())).matrix();
}

/// Row softmax of `logits` where disallowed entries get -c added.
Matrix masked_row_softmax(const Matrix& logits, const MaskPlan* plan) {
  const Index l = logits.rows();
  Matrix out(l, l);
  for (Index i = 0; i < l; ++i) {
    Eigen::RowVectorXd row = logits.row(i);
    if (plan != nullptr) {
      for (Index j = 0; j < l; ++j) {
        if (!plan->allowed(i, j)) row(j) -= plan->bias_constant;
      }
    }
    const double peak = row.maxCoeff();
    row = (row.array() - peak).exp();
    out.row(i) = row / row.sum();
  }
  return out;
}

double resolve_divisor(double requested, Index token_dim) {
  return requested > 0.0 ? requested : static_cast<double>(token_dim);
}

void check_plan(const TokenGrid& grid, const MaskPlan& plan) {
  if (plan.grid_h != grid.grid_h || plan.grid_w != grid.grid_w ||
      static_cast<Index>(plan.token_mask.size()) != grid.size()) {
    throw ValidationError("mask plan token grid does not match the token grid");
  }
  if (plan.pixel_mask.size() != static_cast<std::size_t>(plan.height) * plan.width) {
    throw ValidationError("mask plan pixel raster has the wrong size");
  }
}

/// Mask-biased multi-head attention output projected back to d'.
Matrix biased_multi_head(const ProjectedTokens& proj, const HeadWeights& w, const MaskPlan& plan,
                         double divisor) {
  const Index l = proj.queries.rows();
  const Index head_dim = w.width() / w.head_count;
  Matrix mixed(l, w.width());
  for (int h = 0; h < w.head_count; ++h) {
    const Index c0 = h * head_dim;
    const Matrix q = proj.queries.middleCols(c0, head_dim);
    const Matrix k = proj.keys.middleCols(c0, head_dim);
    const Matrix a = biased_attention(q, k, plan, divisor);
    mixed.middleCols(c0, head_dim) = a * proj.values.middleCols(c0, head_dim);
  }
  return affine_rows(mixed, w.w_p, w.b_p);
}

}  // namespace

void TokenGrid::validate() const {
  if (grid_h <= 0 || grid_w <= 0) throw ValidationError("token grid shape must be positive");
  if (tokens.rows() != static_cast<Index>(grid_h) * grid_w) {
    throw ValidationError("token count " + std::to_string(tokens.rows()) + " != grid_h * grid_w");
  }
  check_finite(tokens, "token grid");
}

Matrix LayerNorm::apply(const Matrix& x) const {
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw ValidationError("layer norm parameters do not match input width");
  }
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const Eigen::RowVectorXd centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(x.cols());
    out.row(i) = (centered / std::sqrt(var + eps)).cwiseProduct(gain.transpose()) + bias.transpose();
  }
  return out;
}

LayerNorm LayerNorm::identity(Index dim) { return LayerNorm{Vector::Ones(dim), Vector::Zero(dim)}; }

void HeadWeights::validate() const {
  const Index d = token_dim();
  const Index wd = width();
  if (head_count <= 0 || wd % head_count != 0) {
    throw ValidationError("head count must divide the projection width");
  }
  if (w_k.rows() != wd || w_v.rows() != wd || w_k.cols() != d || w_v.cols() != d || b_q.size() != wd ||
      b_k.size() != wd || b_v.size() != wd || w_p.rows() != d || w_p.cols() != wd || b_p.size() != d ||
      ln.gain.size() != d || ln.bias.size() != d) {
    throw ValidationError("attention projection shapes are inconsistent");
  }
}

Index OutputHead::output_dim() const {
  return std::visit([](const auto& h) -> Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(h)>, FullHead>) {
      return h.proj.rows();
    } else {
      return h.g.rows();
    }
  }, transform);
}

Index OutputHead::input_dim() const {
  return std::visit([](const auto& h) -> Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(h)>, FullHead>) {
      return h.proj.cols();
    } else {
      return h.g.cols();
    }
  }, transform);
}

void OutputHead::validate(Index token_dim) const {
  if (input_dim() != token_dim) throw ValidationError("output head input width differs from token width");
  if (const auto* full = std::get_if<FullHead>(&transform)) {
    if (full->fc1.cols() != token_dim || full->fc1_bias.size() != full->fc1.rows() ||
        full->fc2.rows() != token_dim || full->fc2.cols() != full->fc1.rows() ||
        full->fc2_bias.size() != token_dim) {
      throw ValidationError("MLP weights of the output head are inconsistent");
    }
  }
}

Matrix OutputHead::apply_tokens(const Matrix& z) const {
  if (const auto* stub = std::get_if<LinearHead>(&transform)) {
    return z * stub->g.transpose();
  }
  const auto& h = std::get<FullHead>(transform);
  const Matrix hidden = quick_gelu(affine_rows(h.ln_mlp.apply(z), h.fc1, h.fc1_bias));
  const Matrix y = z + affine_rows(hidden, h.fc2, h.fc2_bias);
  return h.ln_post.apply(y) * h.proj.transpose();
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> MaskPlan::bias_matrix() const {
  const auto l = static_cast<Index>(token_mask.size());
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> b(l, l);
  for (Index i = 0; i < l; ++i) {
    for (Index j = 0; j < l; ++j) b(i, j) = allowed(i, j);
  }
  return b;
}

std::int64_t MaskPlan::pixel_area() const {
  return std::count_if(pixel_mask.begin(), pixel_mask.end(), [](auto v) { return v != 0; });
}

std::int64_t MaskPlan::token_area() const {
  return std::count_if(token_mask.begin(), token_mask.end(), [](auto v) { return v != 0; });
}

std::vector<std::uint8_t> downsample_mask(std::span<const std::uint8_t> mask, int height, int width, int grid_h,
                                          int grid_w) {
  if (grid_h <= 0 || grid_w <= 0 || height < grid_h || width < grid_w) {
    throw ValidationError("mask must be at least as large as the token grid");
  }
  if (mask.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("mask raster has the wrong size");
  }
  std::vector<std::uint8_t> tokens(static_cast<std::size_t>(grid_h) * grid_w, 0);
  double best_coverage = -1.0;
  std::size_t best_token = 0;
  bool any = false;
  for (int r = 0; r < grid_h; ++r) {
    const int y0 = static_cast<int>(static_cast<std::int64_t>(r) * height / grid_h);
    const int y1 = static_cast<int>(static_cast<std::int64_t>(r + 1) * height / grid_h);
    for (int c = 0; c < grid_w; ++c) {
      const int x0 = static_cast<int>(static_cast<std::int64_t>(c) * width / grid_w);
      const int x1 = static_cast<int>(static_cast<std::int64_t>(c + 1) * width / grid_w);
      std::int64_t covered = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) covered += mask[static_cast<std::size_t>(y) * width + x] ? 1 : 0;
      }
      const double coverage = static_cast<double>(covered) / static_cast<double>((y1 - y0) * (x1 - x0));
      const auto t = static_cast<std::size_t>(r) * grid_w + c;
      if (coverage > 0.5) {
        tokens[t] = 1;
        any = true;
      }
      if (coverage > best_coverage) {
        best_coverage = coverage;
        best_token = t;
      }
    }
  }
  if (!any) tokens[best_token] = 1;
  return tokens;
}

MaskPlan make_mask_plan(std::span<const std::uint8_t> mask, int height, int width, int grid_h, int grid_w,
                        double bias_constant) {
  MaskPlan plan;
  plan.pixel_mask.assign(mask.begin(), mask.end());
  for (auto& v : plan.pixel_mask) v = v ? 1 : 0;
  plan.height = height;
  plan.width = width;
  plan.grid_h = grid_h;
  plan.grid_w = grid_w;
  plan.token_mask = downsample_mask(mask, height, width, grid_h, grid_w);
  plan.bias_constant = bias_constant;
  return plan;
}

ProjectedTokens project_tokens(const TokenGrid& grid, const HeadWeights& weights) {
  grid.validate();
  weights.validate();
  if (grid.dim() != weights.token_dim()) throw ValidationError("token width differs from projection input width");
  const Matrix normed = weights.ln.apply(grid.tokens);
  ProjectedTokens out;
  out.queries = affine_rows(normed, weights.w_q, weights.b_q);
  out.keys = affine_rows(normed, weights.w_k, weights.b_k);
  out.values = affine_rows(normed, weights.w_v, weights.b_v);
  out.fused = affine_rows(out.values, weights.w_p, weights.b_p);
  return out;
}

Matrix biased_attention(const Matrix& queries, const Matrix& keys, const MaskPlan& plan, double scale_divisor) {
  if (queries.rows() != static_cast<Index>(plan.token_mask.size()) || keys.rows() != queries.rows()) {
    throw ValidationError("attention inputs do not match the mask plan");
  }
  const Matrix qq = queries * queries.transpose() / scale_divisor;
  const Matrix kk = keys * keys.transpose() / scale_divisor;
  return 0.5 * (masked_row_softmax(qq, &plan) + masked_row_softmax(kk, &plan));
}

Matrix symmetric_attention(const Matrix& queries, const Matrix& keys, double scale_divisor) {
  const Matrix qq = queries * queries.transpose() / scale_divisor;
  const Matrix kk = keys * keys.transpose() / scale_divisor;
  return 0.5 * (masked_row_softmax(qq, nullptr) + masked_row_softmax(kk, nullptr));
}

Matrix cross_attention(const Matrix& queries, const Matrix& keys, double scale_divisor) {
  return masked_row_softmax(queries * keys.transpose() / scale_divisor, nullptr);
}

Upsampler::Upsampler(int grid_h, int grid_w, int height, int width, UpsampleMode mode)
    : grid_h_(grid_h), grid_w_(grid_w), height_(height), width_(width),
      rows_(axis_taps(grid_h, height, mode)), cols_(axis_taps(grid_w, width, mode)) {}

std::vector<Upsampler::Tap> Upsampler::axis_taps(int in, int out, UpsampleMode mode) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  if (mode == UpsampleMode::Identity) {
    if (in != out) throw ValidationError("identity upsampling needs the pixel grid to equal the token grid");
    for (int i = 0; i < out; ++i) taps[static_cast<std::size_t>(i)] = {i, i, 1.0, 0.0};
    return taps;
  }
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int i = 0; i < out; ++i) {
    const double src = std::max(0.0, (i + 0.5) * scale - 0.5);
    const int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int hi = std::min(lo + 1, in - 1);
    const double frac = src - lo;
    taps[static_cast<std::size_t>(i)] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

Vector Upsampler::upsample(const Vector& grid_values) const {
  if (grid_values.size() != static_cast<Index>(grid_h_) * grid_w_) {
    throw ValidationError("upsample input does not match the token grid");
  }
  Vector out(static_cast<Index>(height_) * width_);
  for (int y = 0; y < height_; ++y) {
    const Tap& r = rows_[static_cast<std::size_t>(y)];
    for (int x = 0; x < width_; ++x) {
      const Tap& c = cols_[static_cast<std::size_t>(x)];
      const auto g = [&](int gy, int gx) { return grid_values(static_cast<Index>(gy) * grid_w_ + gx); };
      out(static_cast<Index>(y) * width_ + x) = r.w_lo * (c.w_lo * g(r.lo, c.lo) + c.w_hi * g(r.lo, c.hi)) +
                                                r.w_hi * (c.w_lo * g(r.hi, c.lo) + c.w_hi * g(r.hi, c.hi));
    }
  }
  return out;
}

Vector Upsampler::adjoint(const Vector& pixel_weights) const {
  if (pixel_weights.size() != static_cast<Index>(height_) * width_) {
    throw ValidationError("pixel weights do not match the raster");
  }
  Vector out = Vector::Zero(static_cast<Index>(grid_h_) * grid_w_);
  for (int y = 0; y < height_; ++y) {
    const Tap& r = rows_[static_cast<std::size_t>(y)];
    for (int x = 0; x < width_; ++x) {
      const double w = pixel_weights(static_cast<Index>(y) * width_ + x);
      if (w == 0.0) continue;
      const Tap& c = cols_[static_cast<std::size_t>(x)];
      out(static_cast<Index>(r.lo) * grid_w_ + c.lo) += w * r.w_lo * c.w_lo;
      out(static_cast<Index>(r.lo) * grid_w_ + c.hi) += w * r.w_lo * c.w_hi;
      out(static_cast<Index>(r.hi) * grid_w_ + c.lo) += w * r.w_hi * c.w_lo;
      out(static_cast<Index>(r.hi) * grid_w_ + c.hi) += w * r.w_hi * c.w_hi;
    }
  }
  return out;
}

Vector average_affinity(const Matrix& attention, const MaskPlan& plan, UpsampleMode mode) {
  const auto token_area = plan.token_area();
  if (token_area == 0) throw ValidationError("average affinity needs a non-empty token mask");
  Vector selector(static_cast<Index>(plan.token_mask.size()));
  for (std::size_t t = 0; t < plan.token_mask.size(); ++t) selector(static_cast<Index>(t)) = plan.token_mask[t];
  const Vector mean_affinity = attention.transpose() * selector / static_cast<double>(token_area);
  Vector pixels = Upsampler(plan.grid_h, plan.grid_w, plan.height, plan.width, mode).upsample(mean_affinity);
  for (std::size_t p = 0; p < plan.pixel_mask.size(); ++p) {
    if (!plan.pixel_mask[p]) pixels(static_cast<Index>(p)) = 0.0;
  }
  return pixels;
}

Matrix similarity_map(const TokenGrid& grid, const HeadWeights& weights, const OutputHead& head,
                      const Vector& text_row, const MaskPlan& plan) {
  check_plan(grid, plan);
  head.validate(grid.dim());
  if (text_row.size() != head.output_dim()) throw ValidationError("text embedding dimension mismatch");
  const ProjectedTokens proj = project_tokens(grid, weights);
  const Matrix out = head.apply_tokens(grid.tokens + proj.fused);
  const Upsampler up(grid.grid_h, grid.grid_w, plan.height, plan.width, head.upsample);

  // Normalization happens per pixel, after interpolation.
  Matrix map = Matrix::Zero(plan.height, plan.width);
  std::vector<Vector> channels;
  channels.reserve(static_cast<std::size_t>(out.cols()));
  for (Index c = 0; c < out.cols(); ++c) channels.push_back(up.upsample(out.col(c)));
  for (int y = 0; y < plan.height; ++y) {
    for (int x = 0; x < plan.width; ++x) {
      const auto p = static_cast<Index>(y) * plan.width + x;
      if (!plan.pixel_mask[static_cast<std::size_t>(p)]) continue;
      double dot = 0.0;
      double norm2 = 0.0;
      for (Index c = 0; c < out.cols(); ++c) {
        const double v = channels[static_cast<std::size_t>(c)](p);
        dot += v * text_row(c);
        norm2 += v * v;
      }
      map(y, x) = norm2 > 0.0 ? dot / std::sqrt(norm2) : 0.0;
    }
  }
  return map;
}

const char* to_string(PoolingVariant variant) {
  switch (variant) {
    case PoolingVariant::NaiveCLIP:
      return "naive-clip";
    case PoolingVariant::CrossAttention:
      return "cross-attention";
    case PoolingVariant::MaskCLIP:
      return "maskclip";
    case PoolingVariant::DBAOriginal:
      return "dba-original";
    case PoolingVariant::DBAApprox:
      return "dba-approx";
    case PoolingVariant::DBAApproxNoResidual:
      return "dba-approx-no-residual";
    case PoolingVariant::DBAMultiHead:
      return "dba-multi-head";
  }
  return "?";
}

Vector pool_mask_embedding(const TokenGrid& grid, const HeadWeights& weights, const OutputHead& head,
                           const MaskPlan& plan, PoolingVariant variant, const PoolingOptions& options) {
  check_plan(grid, plan);
  head.validate(grid.dim());
  const auto area = plan.pixel_area();
  if (area == 0) throw ValidationError("cannot pool an empty mask");

  const ProjectedTokens proj = project_tokens(grid, weights);
  const double divisor = resolve_divisor(options.scale_divisor, grid.dim());
  const Upsampler up(grid.grid_h, grid.grid_w, plan.height, plan.width, head.upsample);
  const Matrix& x = grid.tokens;
  const auto residual = [&](const Matrix& mixed) -> Matrix {
    return options.include_residual ? Matrix(x + mixed) : mixed;
  };

  Vector pixel_mask(static_cast<Index>(plan.pixel_mask.size()));
  for (std::size_t p = 0; p < plan.pixel_mask.size(); ++p) pixel_mask(static_cast<Index>(p)) = plan.pixel_mask[p];
  const Vector mean_weights = up.adjoint(pixel_mask) / static_cast<double>(area);

  Matrix head_in;
  Vector token_weights = mean_weights;
  switch (variant) {
    case PoolingVariant::NaiveCLIP:
      head_in = residual(symmetric_attention(proj.queries, proj.keys, divisor) * proj.fused);
      break;
    case PoolingVariant::CrossAttention:
      head_in = residual(cross_attention(proj.queries, proj.keys, divisor) * proj.fused);
      break;
    case PoolingVariant::MaskCLIP:
      head_in = residual(proj.fused);
      break;
    case PoolingVariant::DBAOriginal: {
      const Matrix a = biased_attention(proj.queries, proj.keys, plan, divisor);
      token_weights = up.adjoint(average_affinity(a, plan, head.upsample));
      head_in = residual(proj.fused);
      break;
    }
    case PoolingVariant::DBAApprox:
      head_in = x + biased_attention(proj.queries, proj.keys, plan, divisor) * proj.fused;
      break;
    case PoolingVariant::DBAApproxNoResidual:
      head_in = biased_attention(proj.queries, proj.keys, plan, divisor) * proj.fused;
      break;
    case PoolingVariant::DBAMultiHead:
      head_in = x + biased_multi_head(proj, weights, plan, divisor);
      break;
  }
  const Matrix out = head.apply_tokens(head_in);
  const Vector pooled = out.transpose() * token_weights;
  const double norm = pooled.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("pooled mask embedding has zero or non-finite norm");
  return pooled / norm;
}

}  // namespace maskcls::attention
