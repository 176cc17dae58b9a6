#include "maskcls/glcc.hpp"

#include "maskcls/evaluation.hpp"

#include <cmath>
#include <limits>

namespace maskcls {

void BootstrapConfig::validate() const {
  propagation.validate();
  probe.validate();
  if (rounds < 1) throw ValidationError("at least one bootstrap round is required");
  if (zero_shot_temperature && !(*zero_shot_temperature > 0.0)) {
    throw ValidationError("zero-shot temperature must be positive");
  }
  if (!(probe_temperature > 0.0)) throw ValidationError("probe temperature must be positive");
  if (!(weak_filter_constant > 0.0)) throw ValidationError("weak filter constant must be positive");
}

void GlccModel::validate() const {
  propagation.validate();
  const Index n = train_embeddings.rows();
  if (propagated.rows() != n || propagation_input.rows() != n || degrees.size() != n) {
    throw ValidationError("model tensors disagree on the number of training masks");
  }
  if (probe.weights.rows() != propagated.cols() || probe.weights.cols() != train_embeddings.cols() ||
      propagation_input.cols() != propagated.cols() || probe.bias.size() != probe.weights.rows()) {
    throw ValidationError("model tensors disagree on class count or embedding dimension");
  }
  check_finite(probe.weights, "probe weights");
  check_finite(propagated, "propagated labels");
  if ((degrees.array() <= 0.0).any()) throw ValidationError("model degrees must be positive");
  if (!(probe_temperature > 0.0)) throw ValidationError("probe temperature must be positive");
}

namespace {

double agreement(const Matrix& labels, const std::vector<std::int32_t>& truth) {
  if (truth.empty()) return std::numeric_limits<double>::quiet_NaN();
  Index hits = 0;
  Index total = 0;
  for (Index i = 0; i < labels.rows(); ++i) {
    const auto t = truth[static_cast<std::size_t>(i)];
    if (t < 0) continue;
    ++total;
    if (argmax(labels.row(i).transpose()) == t) ++hits;
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

GlccModel bootstrap(const BootstrapInputs& in, const BootstrapConfig& config) {
  config.validate();
  if (in.supervision == SupervisionType::OpenVocabulary) {
    throw ValidationError("GLCC not applicable to open-vocabulary data; use zero-shot classification");
  }
  if (in.embeddings == nullptr) throw ValidationError("bootstrap needs embeddings");
  const Matrix& x = *in.embeddings;
  const Index n = x.rows();
  const Matrix& y = in.labels;
  if (y.rows() != n || y.cols() < 2) throw ValidationError("labels must be N x K with K >= 2");
  if (in.areas.size() != n) throw ValidationError("need one area per mask");
  if (!in.truth.empty() && static_cast<Index>(in.truth.size()) != n) {
    throw ValidationError("need one ground-truth label per mask");
  }
  if (in.supervision == SupervisionType::Semi) {
    if (static_cast<Index>(in.labeled.size()) != n) throw ValidationError("semi supervision needs labeled flags");
    bool any = false;
    for (auto f : in.labeled) any = any || f != 0;
    if (!any) throw ValidationError("semi supervision has an empty labeled set");
  }
  const bool full = in.supervision == SupervisionType::Full;
  if (full) {
    check_simplex_rows(y, 1e-6, false);
  } else if (in.initial_scores.rows() != n || in.initial_scores.cols() != y.cols()) {
    throw ValidationError("initial scores must be N x K");
  }

  AffinityGraph owned;
  const AffinityGraph* graph = in.graph;
  if (graph == nullptr) {
    owned = build_knn_graph(x, config.propagation.k, config.threads);
    graph = &owned;
  }
  if (graph->size() != n) throw ValidationError("graph size differs from the number of masks");

  GlccModel model;
  model.propagation = config.propagation;
  model.probe_hyper = config.probe;
  model.supervision = in.supervision;
  model.round_count = full ? 1 : config.rounds;
  model.probe_temperature = config.probe_temperature;
  model.train_embeddings = x;
  model.degrees = graph->degrees;

  Matrix scores = in.initial_scores;
  for (int round = 1; round <= model.round_count; ++round) {
    RoundReport report;
    report.round = round;
    const Matrix pseudo = full ? y : supplement(y, in.labeled, scores, in.supervision, config.weak_filter_constant).data;
    model.probe = train_probe(x, pseudo, in.areas, config.probe);
    report.final_probe_loss = model.probe.training_log.back();
    if (full) {
      model.propagation_input = y;
      model.propagated = y;
    } else {
      const Matrix logits = config.probe_temperature * probe_scores(model.probe, x);
      model.propagation_input =
          supplement(y, in.labeled, logits, in.supervision, config.weak_filter_constant).data;
      SolverReport solver;
      model.propagated = propagate_transductive(*graph, {model.propagation_input, LabelKind::ProbeRefined},
                                                config.propagation, &solver)
                             .data;
      report.cg_iterations = solver.iterations;
      report.cg_residual = solver.relative_residual;
      scores = scores_from_propagated(model.propagated);
    }
    report.pseudo_accuracy = agreement(pseudo, in.truth);
    report.refined_accuracy = agreement(model.propagation_input, in.truth);
    report.propagated_accuracy = agreement(model.propagated, in.truth);
    model.rounds.push_back(report);
  }
  return model;
}

GlccModel bootstrap(const DatasetBundle& bundle, const BootstrapConfig& config, const AffinityGraph* graph) {
  const SupervisionType type = bundle.supervision.type;
  if (type == SupervisionType::OpenVocabulary) {
    throw ValidationError("GLCC not applicable to open-vocabulary data; use zero-shot classification");
  }
  if (!bundle.supervision.labels) throw ValidationError("bundle has no supervision labels");
  BootstrapInputs in;
  in.embeddings = &bundle.embeddings;
  in.areas = bundle.areas();
  in.supervision = type;
  in.labels = *bundle.supervision.labels;
  in.labeled = bundle.supervision.labeled;
  in.graph = graph;
  if (type != SupervisionType::Full) {
    if (!bundle.text) throw ValidationError("semi and weak supervision need a text classifier for the first round");
    in.initial_scores = zero_shot_scores(*bundle.text, bundle.embeddings, config.zero_shot_temperature);
  }
  if (bundle.ground_truth) in.truth = bundle_mask_labels(bundle);
  return bootstrap(in, config);
}

Vector probe_prior(const GlccModel& model, const Vector& embedding) {
  if (embedding.size() != model.probe.weights.cols()) {
    throw ValidationError("embedding dimension " + std::to_string(embedding.size()) + " differs from model " +
                          std::to_string(model.probe.weights.cols()));
  }
  Vector logits = model.probe.weights * embedding;
  if (model.probe.bias.size() == logits.size()) logits += model.probe.bias;
  return softmax(model.probe_temperature * logits);
}

Classification classify(const GlccModel& model, const Vector& embedding) {
  const Vector prior = probe_prior(model, embedding);
  const InductiveWeights w =
      inductive_weights(model.train_embeddings, model.degrees, embedding, model.propagation.k);
  Classification out;
  out.scores = propagate_inductive(prior, w, model.propagated, model.propagation.alpha);
  out.label = argmax(out.scores);
  const double total = out.scores.sum();
  out.confidence = total > 0.0 ? out.scores(out.label) / total : 0.0;
  return out;
}

Classification classify_probe_only(const GlccModel& model, const Vector& embedding) {
  Classification out;
  out.scores = probe_prior(model, embedding);
  out.label = argmax(out.scores);
  out.confidence = out.scores(out.label);
  return out;
}

Matrix zero_shot_scores(const TextClassifier& text, const Matrix& embeddings, std::optional<double> temperature) {
  if (embeddings.cols() != text.weights.cols()) {
    throw ValidationError("embedding dimension differs from the text classifier");
  }
  const double t = temperature.value_or(text.temperature);
  if (!(t > 0.0)) throw ValidationError("zero-shot temperature must be positive");
  return t * (embeddings * text.weights.transpose());
}

Classification classify_zero_shot(const TextClassifier& text, const Vector& embedding,
                                  std::optional<double> temperature) {
  const Matrix logits = zero_shot_scores(text, embedding.transpose(), temperature);
  Classification out;
  out.scores = softmax(logits.row(0).transpose());
  out.label = argmax(logits.row(0).transpose());
  out.confidence = out.scores(out.label);
  return out;
}

Json to_json(const PropagationConfig& c) {
  return {{"alpha", c.alpha}, {"k", c.k}, {"cg_tolerance", c.cg_tolerance}, {"cg_max_iterations", c.cg_max_iterations}};
}

Json to_json(const ProbeHyper& h) {
  return {{"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"base_learning_rate", h.base_learning_rate},
          {"warmup_epochs", h.warmup_epochs},
          {"momentum", h.momentum},
          {"weight_decay", h.weight_decay},
          {"use_bias", h.use_bias},
          {"shuffle", h.shuffle},
          {"seed", h.seed}};
}

Json to_json(const RoundReport& r) {
  return {{"round", r.round},
          {"pseudo_accuracy", r.pseudo_accuracy},
          {"refined_accuracy", r.refined_accuracy},
          {"propagated_accuracy", r.propagated_accuracy},
          {"final_probe_loss", r.final_probe_loss},
          {"cg_iterations", r.cg_iterations},
          {"cg_residual", r.cg_residual}};
}

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

double nan_if_null(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

PropagationConfig propagation_from_json(const Json& j, PropagationConfig c) {
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "k", c.k);
  read_opt(j, "cg_tolerance", c.cg_tolerance);
  read_opt(j, "cg_max_iterations", c.cg_max_iterations);
  return c;
}

ProbeHyper probe_from_json(const Json& j, ProbeHyper h) {
  read_opt(j, "epochs", h.epochs);
  read_opt(j, "batch_size", h.batch_size);
  read_opt(j, "base_learning_rate", h.base_learning_rate);
  read_opt(j, "warmup_epochs", h.warmup_epochs);
  read_opt(j, "momentum", h.momentum);
  read_opt(j, "weight_decay", h.weight_decay);
  read_opt(j, "use_bias", h.use_bias);
  read_opt(j, "shuffle", h.shuffle);
  read_opt(j, "seed", h.seed);
  return h;
}

void save_model(const GlccModel& model, const std::filesystem::path& dir) {
  model.validate();
  TensorWriter writer(dir);
  writer.write_matrix("probe_weights", "probe_weights.f64", model.probe.weights, DType::F64);
  writer.write_vector("probe_bias", "probe_bias.f64", model.probe.bias, DType::F64);
  writer.write_matrix("propagated", "propagated.f64", model.propagated, DType::F64);
  writer.write_matrix("propagation_input", "propagation_input.f64", model.propagation_input, DType::F64);
  writer.write_vector("degrees", "degrees.f64", model.degrees, DType::F64);
  writer.write_matrix("train_embeddings", "train_embeddings.f64", model.train_embeddings, DType::F64);
  Json rounds = Json::array();
  for (const auto& r : model.rounds) rounds.push_back(to_json(r));
  Json manifest;
  manifest["version"] = kModelFormatVersion;
  manifest["kind"] = "glcc-model";
  manifest["N"] = model.train_embeddings.rows();
  manifest["d"] = model.train_embeddings.cols();
  manifest["K"] = model.classes();
  manifest["supervision"] = to_string(model.supervision);
  manifest["round_count"] = model.round_count;
  manifest["probe_temperature"] = model.probe_temperature;
  manifest["propagation"] = to_json(model.propagation);
  manifest["probe"] = to_json(model.probe_hyper);
  manifest["training_log"] = model.probe.training_log;
  manifest["rounds"] = rounds;
  manifest["files"] = writer.file_table();
  write_json_file(dir / "manifest.json", manifest);
}

GlccModel load_model(const std::filesystem::path& dir) {
  const Json manifest = read_json_file(dir / "manifest.json");
  try {
    if (manifest.at("kind").get<std::string>() != "glcc-model") {
      throw ValidationError(dir.string() + " does not hold a GLCC model");
    }
    if (manifest.at("version").get<int>() != kModelFormatVersion) {
      throw ValidationError("unsupported model format version");
    }
    const TensorReader reader(dir, manifest.at("files"));
    GlccModel m;
    m.probe.weights = reader.matrix("probe_weights");
    m.probe.bias = reader.vector("probe_bias");
    m.probe.training_log = manifest.at("training_log").get<std::vector<double>>();
    m.propagated = reader.matrix("propagated");
    m.propagation_input = reader.matrix("propagation_input");
    m.degrees = reader.vector("degrees");
    m.train_embeddings = reader.matrix("train_embeddings");
    m.propagation = propagation_from_json(manifest.at("propagation"));
    m.probe_hyper = probe_from_json(manifest.at("probe"));
    m.supervision = parse_supervision(manifest.at("supervision").get<std::string>());
    m.round_count = manifest.at("round_count").get<int>();
    m.probe_temperature = manifest.at("probe_temperature").get<double>();
    for (const auto& r : manifest.at("rounds")) {
      RoundReport rep;
      rep.round = r.at("round").get<int>();
      rep.pseudo_accuracy = nan_if_null(r.at("pseudo_accuracy"));
      rep.refined_accuracy = nan_if_null(r.at("refined_accuracy"));
      rep.propagated_accuracy = nan_if_null(r.at("propagated_accuracy"));
      rep.final_probe_loss = r.at("final_probe_loss").get<double>();
      rep.cg_iterations = r.at("cg_iterations").get<int>();
      rep.cg_residual = r.at("cg_residual").get<double>();
      m.rounds.push_back(rep);
    }
    const auto n = manifest.at("N").get<Index>();
    const auto d = manifest.at("d").get<Index>();
    const auto k = manifest.at("K").get<Index>();
    if (m.train_embeddings.rows() != n || m.train_embeddings.cols() != d || m.propagated.cols() != k) {
      throw ValidationError("model manifest shape disagrees with its tensors");
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed model manifest: ") + ex.what());
  }
}

}  // namespace maskcls
