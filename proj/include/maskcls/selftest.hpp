#pragma once

#include "maskcls/attention.hpp"
#include "maskcls/tensor_io.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

// Synthetic tensors and the attention-kernel equivalence checks run by the
// kernel-selftest command.
namespace maskcls::attention {

/// Random token grid with standard normal entries.
TokenGrid random_token_grid(std::mt19937_64& rng, int grid_h, int grid_w, Index token_dim);
/// Random layer norm and projections scaled by 1/sqrt(fan_in).
HeadWeights random_head_weights(std::mt19937_64& rng, Index token_dim, Index width, int head_count);
OutputHead random_linear_head(std::mt19937_64& rng, Index token_dim, Index out_dim, UpsampleMode mode);
OutputHead random_full_head(std::mt19937_64& rng, Index token_dim, Index hidden, Index out_dim, UpsampleMode mode);
/// Axis-aligned random rectangle (never empty) over an H x W raster.
std::vector<std::uint8_t> random_box_mask(std::mt19937_64& rng, int height, int width);

struct SelftestOptions {
  int grids = 100;
  int bias_rows = 1000;
  std::uint64_t seed = 0;
  int grid_h = 4;
  int grid_w = 4;
  Index token_dim = 8;
  Index out_dim = 6;
  double bias_constant = kDefaultBiasConstant;
};

struct SelftestCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;

  bool passed() const;
  Json to_json() const;
};

/// Runs:
///  - DBAOriginal vs DBAApproxNoResidual (linear head, no residual, single
///    head, identity upsampling): worst 1 - cosine;
///  - full-mask DBAApprox vs NaiveCLIP (full head, bilinear): worst abs diff;
///  - largest softmax mass on forbidden entries of biased attention;
///  - worst row-sum error of biased attention;
///  - worst norm error of pooled embeddings over all variants.
SelftestReport run_kernel_selftest(const SelftestOptions& options);

}  // namespace maskcls::attention
