#include "maskcls/selftest.hpp"

#include <algorithm>
#include <cmath>

namespace maskcls::attention {
namespace {

Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Vector gaussian_vector(std::mt19937_64& rng, Index n, double scale) {
  return gaussian(rng, n, 1, scale).col(0);
}

LayerNorm random_layer_norm(std::mt19937_64& rng, Index dim) {
  return LayerNorm{Vector::Ones(dim) + gaussian_vector(rng, dim, 0.1), gaussian_vector(rng, dim, 0.1)};
}

}  // namespace

TokenGrid random_token_grid(std::mt19937_64& rng, int grid_h, int grid_w, Index token_dim) {
  return TokenGrid{gaussian(rng, static_cast<Index>(grid_h) * grid_w, token_dim, 1.0), grid_h, grid_w};
}

HeadWeights random_head_weights(std::mt19937_64& rng, Index token_dim, Index width, int head_count) {
  HeadWeights w;
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(width));
  w.ln = random_layer_norm(rng, token_dim);
  w.w_q = gaussian(rng, width, token_dim, in_scale);
  w.w_k = gaussian(rng, width, token_dim, in_scale);
  w.w_v = gaussian(rng, width, token_dim, in_scale);
  w.b_q = gaussian_vector(rng, width, 0.1);
  w.b_k = gaussian_vector(rng, width, 0.1);
  w.b_v = gaussian_vector(rng, width, 0.1);
  w.w_p = gaussian(rng, token_dim, width, out_scale);
  w.b_p = gaussian_vector(rng, token_dim, 0.1);
  w.head_count = head_count;
  return w;
}

OutputHead random_linear_head(std::mt19937_64& rng, Index token_dim, Index out_dim, UpsampleMode mode) {
  return OutputHead{LinearHead{gaussian(rng, out_dim, token_dim, 1.0 / std::sqrt(static_cast<double>(token_dim)))},
                    mode};
}

OutputHead random_full_head(std::mt19937_64& rng, Index token_dim, Index hidden, Index out_dim, UpsampleMode mode) {
  FullHead h;
  h.ln_mlp = random_layer_norm(rng, token_dim);
  h.fc1 = gaussian(rng, hidden, token_dim, 1.0 / std::sqrt(static_cast<double>(token_dim)));
  h.fc1_bias = gaussian_vector(rng, hidden, 0.1);
  h.fc2 = gaussian(rng, token_dim, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
  h.fc2_bias = gaussian_vector(rng, token_dim, 0.1);
  h.ln_post = random_layer_norm(rng, token_dim);
  h.proj = gaussian(rng, out_dim, token_dim, 1.0 / std::sqrt(static_cast<double>(token_dim)));
  return OutputHead{std::move(h), mode};
}

std::vector<std::uint8_t> random_box_mask(std::mt19937_64& rng, int height, int width) {
  std::uniform_int_distribution<int> ys(0, height - 1);
  std::uniform_int_distribution<int> xs(0, width - 1);
  int y0 = ys(rng), y1 = ys(rng), x0 = xs(rng), x1 = xs(rng);
  if (y0 > y1) std::swap(y0, y1);
  if (x0 > x1) std::swap(x0, x1);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) mask[static_cast<std::size_t>(y) * width + x] = 1;
  }
  return mask;
}

bool SelftestReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const SelftestCheck& c) { return c.passed; });
}

Json SelftestReport::to_json() const {
  Json out;
  out["passed"] = passed();
  Json list = Json::array();
  for (const auto& c : checks) {
    list.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}});
  }
  out["checks"] = list;
  return out;
}

SelftestReport run_kernel_selftest(const SelftestOptions& o) {
  if (o.grids <= 0 || o.bias_rows <= 0 || o.grid_h <= 0 || o.grid_w <= 0 || o.token_dim <= 0 || o.out_dim <= 0) {
    throw ValidationError("self-test sizes must be positive");
  }
  std::mt19937_64 rng(o.seed);
  const int height = o.grid_h * 4;
  const int width = o.grid_w * 4;
  const Index hidden = 2 * o.token_dim;

  double worst_chain = 0.0;
  double worst_full_mask = 0.0;
  double worst_norm = 0.0;
  for (int g = 0; g < o.grids; ++g) {
    const TokenGrid grid = random_token_grid(rng, o.grid_h, o.grid_w, o.token_dim);
    const HeadWeights weights = random_head_weights(rng, o.token_dim, o.token_dim, 1);

    const OutputHead linear = random_linear_head(rng, o.token_dim, o.out_dim, UpsampleMode::Identity);
    const auto token_mask = random_box_mask(rng, o.grid_h, o.grid_w);
    const MaskPlan token_plan = make_mask_plan(token_mask, o.grid_h, o.grid_w, o.grid_h, o.grid_w, o.bias_constant);
    PoolingOptions no_residual;
    no_residual.include_residual = false;
    const Vector original =
        pool_mask_embedding(grid, weights, linear, token_plan, PoolingVariant::DBAOriginal, no_residual);
    const Vector approx =
        pool_mask_embedding(grid, weights, linear, token_plan, PoolingVariant::DBAApproxNoResidual, no_residual);
    worst_chain = std::max(worst_chain, 1.0 - original.dot(approx));

    const OutputHead full = random_full_head(rng, o.token_dim, hidden, o.out_dim, UpsampleMode::Bilinear);
    const std::vector<std::uint8_t> everything(static_cast<std::size_t>(height) * width, 1);
    const MaskPlan full_plan = make_mask_plan(everything, height, width, o.grid_h, o.grid_w, o.bias_constant);
    const Vector dba = pool_mask_embedding(grid, weights, full, full_plan, PoolingVariant::DBAApprox);
    const Vector naive = pool_mask_embedding(grid, weights, full, full_plan, PoolingVariant::NaiveCLIP);
    worst_full_mask = std::max(worst_full_mask, (dba - naive).cwiseAbs().maxCoeff());

    const MaskPlan box_plan =
        make_mask_plan(random_box_mask(rng, height, width), height, width, o.grid_h, o.grid_w, o.bias_constant);
    for (auto variant : {PoolingVariant::NaiveCLIP, PoolingVariant::CrossAttention, PoolingVariant::MaskCLIP,
                         PoolingVariant::DBAOriginal, PoolingVariant::DBAApprox, PoolingVariant::DBAApproxNoResidual,
                         PoolingVariant::DBAMultiHead}) {
      const Vector e = pool_mask_embedding(grid, weights, full, box_plan, variant);
      worst_norm = std::max(worst_norm, std::abs(e.norm() - 1.0));
    }
  }

  double worst_forbidden = 0.0;
  double worst_row_sum = 0.0;
  int rows_seen = 0;
  while (rows_seen < o.bias_rows) {
    const TokenGrid grid = random_token_grid(rng, o.grid_h, o.grid_w, o.token_dim);
    const HeadWeights weights = random_head_weights(rng, o.token_dim, o.token_dim, 1);
    const auto mask = random_box_mask(rng, height, width);
    const MaskPlan plan = make_mask_plan(mask, height, width, o.grid_h, o.grid_w, o.bias_constant);
    const ProjectedTokens proj = project_tokens(grid, weights);
    const Matrix a = biased_attention(proj.queries, proj.keys, plan, static_cast<double>(o.token_dim));
    for (Index i = 0; i < a.rows() && rows_seen < o.bias_rows; ++i, ++rows_seen) {
      double forbidden = 0.0;
      for (Index j = 0; j < a.cols(); ++j) {
        if (!plan.allowed(i, j)) forbidden += a(i, j);
      }
      worst_forbidden = std::max(worst_forbidden, forbidden);
      worst_row_sum = std::max(worst_row_sum, std::abs(a.row(i).sum() - 1.0));
    }
  }

  SelftestReport report;
  const auto add = [&](std::string name, double value, double threshold) {
    report.checks.push_back({std::move(name), value, threshold, value < threshold});
  };
  add("affinity_chain_one_minus_cosine", worst_chain, 1e-10);
  add("full_mask_dba_vs_naive_max_abs", worst_full_mask, 1e-6);
  add("forbidden_attention_mass", worst_forbidden, 1e-20);
  add("attention_row_sum_error", worst_row_sum, 1e-6);
  add("pooled_norm_error", worst_norm, 1e-5);
  return report;
}

}  // namespace maskcls::attention
