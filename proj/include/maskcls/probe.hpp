#pragma once

#include "maskcls/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace maskcls {

/// Linear-probe recipe: SGD with momentum, linear warmup then cosine decay,
/// learning rate = base * batch / 256.
struct ProbeHyper {
  int epochs = 90;
  int batch_size = 4096;
  double base_learning_rate = 0.1;
  int warmup_epochs = 10;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool use_bias = false;
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const;
  /// Batch size actually used for `n` samples (full batch when n < batch_size).
  int effective_batch(Index n) const;
  double peak_learning_rate(Index n) const;
  /// Learning rate at fractional epoch `t`.
  double learning_rate(double t, Index n) const;
};

struct ProbeModel {
  Matrix weights;  // K x d
  Vector bias;     // K, zero unless trained with use_bias
  std::vector<double> training_log;
};

struct LossGradient {
  double loss = 0.0;
  Matrix weight_grad;
  Vector bias_grad;
};

/// Area-weighted soft cross-entropy sum_i a_i CE(softmax(U x_i + b), t_i) / sum_i a_i
/// over the selected rows, with its gradient.
LossGradient probe_loss_gradient(const Matrix& weights, const Vector& bias, const Matrix& x, const Matrix& targets,
                                 const Vector& areas, std::span<const Index> rows = {});

/// Trains U on soft targets. Deterministic for a fixed seed. Throws
/// NumericalError naming the epoch if the loss becomes non-finite.
ProbeModel train_probe(const Matrix& x, const Matrix& targets, const Vector& areas, const ProbeHyper& hyper);

/// Logits E U^T (+ bias); callers apply softmax.
Matrix probe_scores(const ProbeModel& model, const Matrix& embeddings);

}  // namespace maskcls
