#pragma once

#include "maskcls/bundle.hpp"
#include "maskcls/graph.hpp"
#include "maskcls/probe.hpp"
#include "maskcls/propagation.hpp"
#include "maskcls/tensor_io.hpp"
#include "maskcls/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace maskcls {

struct BootstrapConfig {
  PropagationConfig propagation;
  ProbeHyper probe;
  int rounds = 2;
  /// Overrides the bundle's zero-shot temperature when set.
  std::optional<double> zero_shot_temperature;
  /// Scale applied to probe logits before softmax.
  double probe_temperature = 1.0;
  double weak_filter_constant = 1e4;
  int threads = 1;

  void validate() const;
};

struct RoundReport {
  int round = 0;
  /// Top-1 agreement of P^c, P^r and P* with ground-truth mask labels; NaN
  /// without ground truth.
  double pseudo_accuracy = 0.0;
  double refined_accuracy = 0.0;
  double propagated_accuracy = 0.0;
  double final_probe_loss = 0.0;
  int cg_iterations = 0;
  double cg_residual = 0.0;
};

/// Frozen classifier: probe, smoothed training labels and the neighbour store.
struct GlccModel {
  ProbeModel probe;
  Matrix propagated;         // P*, N x K
  Matrix propagation_input;  // P^r that produced P* (Y under full supervision)
  Vector degrees;            // D of the training graph
  Matrix train_embeddings;   // X
  PropagationConfig propagation;
  ProbeHyper probe_hyper;
  SupervisionType supervision = SupervisionType::Full;
  int round_count = 0;
  double probe_temperature = 1.0;
  std::vector<RoundReport> rounds;

  Index classes() const { return propagated.cols(); }
  void validate() const;
};

/// Inputs to the bootstrap independent of the bundle format.
struct BootstrapInputs {
  const Matrix* embeddings = nullptr;  // X, N x d unit rows
  Vector areas;
  SupervisionType supervision = SupervisionType::Full;
  Matrix labels;                      // Y, N x K
  std::vector<std::uint8_t> labeled;  // semi only
  /// Scores used to build the first P^c (zero-shot logits); ignored under full.
  Matrix initial_scores;
  /// Optional ground-truth mask labels (-1 unknown) for round reports.
  std::vector<std::int32_t> truth;
  /// Prebuilt graph over X; built on demand when null.
  const AffinityGraph* graph = nullptr;
};

GlccModel bootstrap(const BootstrapInputs& inputs, const BootstrapConfig& config);

/// Runs the bootstrap on a bundle, scoring the first round with its text
/// classifier. Refuses open-vocabulary bundles.
GlccModel bootstrap(const DatasetBundle& bundle, const BootstrapConfig& config,
                    const AffinityGraph* graph = nullptr);

struct Classification {
  Vector scores;  // p* for GLCC, softmax probabilities otherwise
  Index label = 0;
  double confidence = 0.0;
};

/// p = softmax(t U e), p* = p + alpha a_bar^T P*, label = argmax p*.
Classification classify(const GlccModel& model, const Vector& embedding);
Classification classify_probe_only(const GlccModel& model, const Vector& embedding);
/// Scores temperature * W e against the text classifier.
Classification classify_zero_shot(const TextClassifier& text, const Vector& embedding,
                                  std::optional<double> temperature = std::nullopt);

/// Softmax of probe logits at the model's probe temperature.
Vector probe_prior(const GlccModel& model, const Vector& embedding);

/// Zero-shot logits temperature * X W^T for every row.
Matrix zero_shot_scores(const TextClassifier& text, const Matrix& embeddings,
                        std::optional<double> temperature = std::nullopt);

inline constexpr int kModelFormatVersion = 1;

void save_model(const GlccModel& model, const std::filesystem::path& dir);
GlccModel load_model(const std::filesystem::path& dir);

Json to_json(const PropagationConfig& c);
Json to_json(const ProbeHyper& h);
Json to_json(const RoundReport& r);
PropagationConfig propagation_from_json(const Json& j, PropagationConfig base = {});
ProbeHyper probe_from_json(const Json& j, ProbeHyper base = {});

}  // namespace maskcls
