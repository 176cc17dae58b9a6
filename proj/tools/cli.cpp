#include "cli.hpp"

#include "maskcls/bundle.hpp"
#include "maskcls/evaluation.hpp"
#include "maskcls/graph.hpp"
#include "maskcls/parallel.hpp"
#include "maskcls/selftest.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>

namespace maskcls::cli {

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : std::filesystem::path(workdir) / p;
}

BootstrapConfig RunConfig::bootstrap_config() const {
  BootstrapConfig c;
  c.propagation = propagation;
  c.probe = probe;
  c.rounds = rounds;
  c.zero_shot_temperature = temperature;
  c.probe_temperature = probe_temperature;
  c.weak_filter_constant = weak_filter_constant;
  c.threads = threads;
  return c;
}

Json RunConfig::to_json() const {
  Json j;
  j["version"] = kRunConfigVersion;
  j["command"] = command;
  j["workdir"] = workdir;
  j["supervision"] = supervision ? Json(*supervision) : Json(nullptr);
  j["propagation"] = maskcls::to_json(propagation);
  j["probe"] = maskcls::to_json(probe);
  j["rounds"] = rounds;
  j["temperature"] = temperature ? Json(*temperature) : Json(nullptr);
  j["probe_temperature"] = probe_temperature;
  j["weak_filter_constant"] = weak_filter_constant;
  j["mode"] = mode;
  j["threads"] = threads;
  j["paths"] = {{"bundle", bundle}, {"graph", graph}, {"model", model}, {"pred", pred}, {"out", out}};
  j["selftest"] = {{"grids", selftest_grids}, {"bias_rows", selftest_bias_rows}};
  j["oracle"] = {{"max_size", oracle_max_size}};
  return j;
}

namespace {

template <class T>
void take(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const Json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_json(const Json& j, RunConfig c) {
  try {
    if (!j.is_object() || !j.contains("version")) throw ValidationError("config file has no version field");
    if (j.at("version").get<int>() != kRunConfigVersion) {
      throw ValidationError("unsupported config version " + j.at("version").dump());
    }
    take(j, "workdir", c.workdir);
    if (j.contains("supervision") && !j.at("supervision").is_null()) {
      c.supervision = j.at("supervision").get<std::string>();
    }
    if (j.contains("propagation")) c.propagation = propagation_from_json(j.at("propagation"), c.propagation);
    if (j.contains("probe")) c.probe = probe_from_json(j.at("probe"), c.probe);
    take(j, "rounds", c.rounds);
    if (j.contains("temperature") && !j.at("temperature").is_null()) c.temperature = j.at("temperature").get<double>();
    take(j, "probe_temperature", c.probe_temperature);
    take(j, "weak_filter_constant", c.weak_filter_constant);
    take(j, "mode", c.mode);
    take(j, "threads", c.threads);
    if (j.contains("paths")) {
      const Json& p = j.at("paths");
      take(p, "bundle", c.bundle);
      take(p, "graph", c.graph);
      take(p, "model", c.model);
      take(p, "pred", c.pred);
      take(p, "out", c.out);
    }
    if (j.contains("selftest")) {
      take(j.at("selftest"), "grids", c.selftest_grids);
      take(j.at("selftest"), "bias_rows", c.selftest_bias_rows);
    }
    if (j.contains("oracle")) take(j.at("oracle"), "max_size", c.oracle_max_size);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed config: ") + ex.what());
  }
  return c;
}

namespace {

/// Command-line values; unset entries leave the config file or defaults alone.
struct Flags {
  std::optional<std::string> config, workdir, supervision, bundle, graph, model, pred, out, mode;
  std::optional<int> threads, k, rounds, epochs, batch_size, warmup_epochs, cg_max_iterations, grids, bias_rows;
  std::optional<double> alpha, cg_tolerance, learning_rate, momentum, weight_decay, temperature, probe_temperature,
      filter_constant;
  std::optional<std::uint64_t> seed;
  std::optional<Index> max_size;
  bool probe_bias = false;
  bool no_shuffle = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config (version 1); flags override its values");
  cmd->add_option("--workdir", f.workdir, "Directory that relative paths are resolved against");
  cmd->add_option("--threads", f.threads, std::string("Worker threads (default: $") + kThreadsEnv + " or all cores)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", f.out, "Output directory");
}

void add_propagation(CLI::App* cmd, Flags& f) {
  cmd->add_option("--k", f.k, "Neighbours per node")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", f.alpha, "Propagation strength in [0, 1)");
  cmd->add_option("--cg-tolerance", f.cg_tolerance, "Relative residual target");
  cmd->add_option("--cg-max-iterations", f.cg_max_iterations, "Iteration cap");
}

void add_training(CLI::App* cmd, Flags& f) {
  cmd->add_option("--supervision", f.supervision, "Expected supervision type of the bundle")
      ->check(CLI::IsMember({"full", "semi", "weak", "open-vocabulary"}));
  cmd->add_option("--rounds", f.rounds, "Bootstrap rounds");
  cmd->add_option("--epochs", f.epochs, "Probe epochs");
  cmd->add_option("--batch-size", f.batch_size, "Probe batch size");
  cmd->add_option("--learning-rate", f.learning_rate, "Base learning rate per 256 samples");
  cmd->add_option("--warmup-epochs", f.warmup_epochs, "Linear warmup epochs");
  cmd->add_option("--momentum", f.momentum, "SGD momentum");
  cmd->add_option("--weight-decay", f.weight_decay, "L2 penalty");
  cmd->add_option("--seed", f.seed, "Shuffling seed");
  cmd->add_flag("--probe-bias", f.probe_bias, "Train a bias term");
  cmd->add_flag("--no-shuffle", f.no_shuffle, "Keep sample order fixed");
  cmd->add_option("--temperature", f.temperature, "Zero-shot logit scale (default: bundle value)");
  cmd->add_option("--probe-temperature", f.probe_temperature, "Probe logit scale");
  cmd->add_option("--filter-constant", f.filter_constant, "Weak-label filter constant");
}

RunConfig resolve_config(const std::string& command, const Flags& f) {
  RunConfig c;
  if (f.config) {
    const std::filesystem::path file(*f.config);
    const std::filesystem::path base = f.workdir ? std::filesystem::path(*f.workdir) : std::filesystem::path(".");
    c = RunConfig::from_json(read_json_file(file.is_absolute() ? file : base / file));
  }
  c.command = command;
  if (f.workdir) c.workdir = *f.workdir;
  if (f.supervision) c.supervision = *f.supervision;
  if (f.bundle) c.bundle = *f.bundle;
  if (f.graph) c.graph = *f.graph;
  if (f.model) c.model = *f.model;
  if (f.pred) c.pred = *f.pred;
  if (f.out) c.out = *f.out;
  if (f.mode) c.mode = *f.mode;
  if (f.threads) c.threads = *f.threads;
  if (f.k) c.propagation.k = *f.k;
  if (f.alpha) c.propagation.alpha = *f.alpha;
  if (f.cg_tolerance) c.propagation.cg_tolerance = *f.cg_tolerance;
  if (f.cg_max_iterations) c.propagation.cg_max_iterations = *f.cg_max_iterations;
  if (f.rounds) c.rounds = *f.rounds;
  if (f.epochs) c.probe.epochs = *f.epochs;
  if (f.batch_size) c.probe.batch_size = *f.batch_size;
  if (f.learning_rate) c.probe.base_learning_rate = *f.learning_rate;
  if (f.warmup_epochs) c.probe.warmup_epochs = *f.warmup_epochs;
  if (f.momentum) c.probe.momentum = *f.momentum;
  if (f.weight_decay) c.probe.weight_decay = *f.weight_decay;
  if (f.seed) c.probe.seed = *f.seed;
  if (f.probe_bias) c.probe.use_bias = true;
  if (f.no_shuffle) c.probe.shuffle = false;
  if (f.temperature) c.temperature = *f.temperature;
  if (f.probe_temperature) c.probe_temperature = *f.probe_temperature;
  if (f.filter_constant) c.weak_filter_constant = *f.filter_constant;
  if (f.grids) c.selftest_grids = *f.grids;
  if (f.bias_rows) c.selftest_bias_rows = *f.bias_rows;
  if (f.max_size) c.oracle_max_size = *f.max_size;
  if (c.threads <= 0) c.threads = default_thread_count();
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

std::filesystem::path prepare_out(const RunConfig& c) {
  require(c.out, "--out");
  const auto dir = c.resolve(c.out);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_run_config(const RunConfig& c, const std::filesystem::path& dir) {
  write_json_file(dir / "run_config.json", c.to_json());
}

DatasetBundle load_checked_bundle(const RunConfig& c) {
  require(c.bundle, "--bundle");
  DatasetBundle b = load_bundle(c.resolve(c.bundle));
  if (c.supervision && parse_supervision(*c.supervision) != b.supervision.type) {
    throw ValidationError("config expects " + *c.supervision + " supervision but the bundle is " +
                          to_string(b.supervision.type));
  }
  return b;
}

int cmd_build_graph(const RunConfig& c, std::ostream& out) {
  const DatasetBundle b = load_checked_bundle(c);
  c.propagation.validate();
  const AffinityGraph g = build_knn_graph(b.embeddings, c.propagation.k, c.threads);
  const auto dir = prepare_out(c);
  save_graph(g, dir);
  write_run_config(c, dir);
  out << "graph: N=" << g.size() << " k=" << g.k << " nnz=" << g.affinity.nonZeros() << " -> " << dir.string()
      << '\n';
  return kOk;
}

int cmd_bootstrap(const RunConfig& c, std::ostream& out) {
  const DatasetBundle b = load_checked_bundle(c);
  std::optional<AffinityGraph> graph;
  if (!c.graph.empty()) {
    graph = load_graph(c.resolve(c.graph));
    if (graph->k != c.propagation.k) {
      throw ValidationError("graph was built with k=" + std::to_string(graph->k) + " but config says k=" +
                            std::to_string(c.propagation.k));
    }
  }
  const GlccModel model = bootstrap(b, c.bootstrap_config(), graph ? &*graph : nullptr);
  const auto dir = prepare_out(c);
  save_model(model, dir);
  Json rounds = Json::array();
  for (const auto& r : model.rounds) rounds.push_back(to_json(r));
  write_json_file(dir / "rounds.json", Json{{"supervision", to_string(model.supervision)}, {"rounds", rounds}});
  write_run_config(c, dir);
  for (const auto& r : model.rounds) {
    out << "round " << r.round << ": probe loss " << r.final_probe_loss << ", cg iterations " << r.cg_iterations
        << ", pseudo/refined/propagated accuracy " << r.pseudo_accuracy << '/' << r.refined_accuracy << '/'
        << r.propagated_accuracy << '\n';
  }
  out << "model -> " << dir.string() << '\n';
  return kOk;
}

int cmd_infer(const RunConfig& c, std::ostream& out) {
  const DatasetBundle b = load_checked_bundle(c);
  std::string mode = c.mode;
  if (mode == "auto") {
    mode = (b.supervision.type == SupervisionType::OpenVocabulary || c.model.empty()) ? "zero-shot" : "glcc";
  }
  std::optional<GlccModel> model;
  if (mode == "glcc" || mode == "probe") {
    require(c.model, "--model");
    model = load_model(c.resolve(c.model));
    if (model->train_embeddings.cols() != b.dim()) {
      throw ValidationError("model embedding dimension differs from the bundle");
    }
  } else if (mode == "zero-shot") {
    if (!b.text) throw ValidationError("zero-shot inference needs a text classifier in the bundle");
  } else {
    throw CLI::ValidationError("--mode", "must be auto, glcc, probe or zero-shot");
  }
  const Index n = b.size();
  const Index k = model ? model->classes() : b.text->num_classes();
  Matrix scores(n, k);
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  Vector confidence(n);
  parallel_for(static_cast<std::size_t>(n), c.threads, [&](std::size_t i) {
    const Vector e = b.embeddings.row(static_cast<Index>(i)).transpose();
    const Classification r = mode == "glcc"    ? classify(*model, e)
                             : mode == "probe" ? classify_probe_only(*model, e)
                                               : classify_zero_shot(*b.text, e, c.temperature);
    scores.row(static_cast<Index>(i)) = r.scores.transpose();
    labels[i] = static_cast<std::int32_t>(r.label);
    confidence(static_cast<Index>(i)) = r.confidence;
  });

  const bool background = b.text && b.text->has_background;
  const std::int32_t uncovered = background ? 0 : b.ignore_value;
  const auto owner = b.image_index_of_masks();
  std::vector<std::int32_t> raster;
  Json images = Json::array();
  for (std::size_t img = 0; img < b.images.size(); ++img) {
    std::vector<RasterItem> items;
    for (std::size_t i = 0; i < b.masks.size(); ++i) {
      if (owner[i] == img) items.push_back({&b.masks[i], labels[i], confidence(static_cast<Index>(i))});
    }
    const SegmentationMap map =
        rasterize(items, b.images[img].height, b.images[img].width, uncovered, b.ignore_value);
    raster.insert(raster.end(), map.labels.begin(), map.labels.end());
    images.push_back({{"id", b.images[img].id}, {"height", b.images[img].height}, {"width", b.images[img].width}});
  }

  const auto dir = prepare_out(c);
  TensorWriter writer(dir);
  writer.write_i32("labels", "labels.i32", labels);
  writer.write_vector("confidence", "confidence.f64", confidence, DType::F64);
  writer.write_matrix("scores", "scores.f64", scores, DType::F64);
  writer.write_i32("segmentation", "segmentation.i32", raster);
  Json manifest;
  manifest["version"] = 1;
  manifest["kind"] = "predictions";
  manifest["mode"] = mode;
  manifest["N"] = n;
  manifest["K"] = k;
  manifest["ignore_value"] = b.ignore_value;
  manifest["images"] = images;
  manifest["files"] = writer.file_table();
  write_json_file(dir / "manifest.json", manifest);

  Json masks = Json::array();
  for (Index i = 0; i < n; ++i) {
    Json row{{"index", i},
             {"image_id", b.masks[static_cast<std::size_t>(i)].image_id},
             {"label", labels[static_cast<std::size_t>(i)]},
             {"confidence", confidence(i)}};
    if (b.text) row["class"] = b.text->class_names[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    masks.push_back(row);
  }
  write_json_file(dir / "predictions.json", Json{{"mode", mode}, {"masks", masks}});
  write_run_config(c, dir);
  out << "infer (" << mode << "): " << n << " masks, " << b.images.size() << " images -> " << dir.string() << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const DatasetBundle b = load_checked_bundle(c);
  if (!b.ground_truth) throw ValidationError("bundle has no ground-truth segmentation to evaluate against");
  require(c.pred, "--pred");
  const auto pred_dir = c.resolve(c.pred);
  if (!std::filesystem::exists(pred_dir / "manifest.json")) {
    throw ValidationError("prediction directory " + pred_dir.string() + " holds no manifest.json");
  }
  const Json manifest = read_json_file(pred_dir / "manifest.json");
  std::vector<std::int32_t> labels;
  std::vector<std::int32_t> raster;
  Index k = 0;
  std::int32_t pred_ignore = 0;
  try {
    if (manifest.at("kind").get<std::string>() != "predictions") {
      throw ValidationError(pred_dir.string() + " does not hold predictions");
    }
    const TensorReader reader(pred_dir, manifest.at("files"));
    labels = reader.i32("labels");
    raster = reader.i32("segmentation");
    k = manifest.at("K").get<Index>();
    pred_ignore = manifest.at("ignore_value").get<std::int32_t>();
    const Json& images = manifest.at("images");
    if (images.size() != b.images.size()) throw ValidationError("prediction and bundle image lists differ");
    for (std::size_t i = 0; i < b.images.size(); ++i) {
      if (images[i].at("id").get<std::string>() != b.images[i].id ||
          images[i].at("height").get<int>() != b.images[i].height ||
          images[i].at("width").get<int>() != b.images[i].width) {
        throw ValidationError("prediction image " + std::to_string(i) + " does not match the bundle");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed prediction manifest: ") + ex.what());
  }
  if (labels.size() != b.masks.size()) throw ValidationError("prediction count differs from the bundle mask count");
  if (b.num_classes() != 0 && b.num_classes() != k) throw ValidationError("prediction class count differs");

  ConfusionMatrix cm(k);
  std::size_t offset = 0;
  for (std::size_t img = 0; img < b.images.size(); ++img) {
    const auto& info = b.images[img];
    SegmentationMap pred(info.height, info.width, 0, pred_ignore);
    const std::size_t count = pred.labels.size();
    if (offset + count > raster.size()) throw ValidationError("segmentation tensor is too short");
    std::copy_n(raster.begin() + static_cast<std::ptrdiff_t>(offset), count, pred.labels.begin());
    offset += count;
    cm.add(pred, (*b.ground_truth)[img]);
  }
  if (offset != raster.size()) throw ValidationError("segmentation tensor is too long");

  const auto truth = bundle_mask_labels(b);
  std::vector<std::int32_t> scored_pred;
  std::vector<std::int32_t> scored_truth;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0) continue;
    scored_pred.push_back(labels[i]);
    scored_truth.push_back(truth[i]);
  }
  const IouResult iou = iou_from_confusion(cm);
  const F1Result f1 = mask_f1(scored_pred, scored_truth, k);
  const std::vector<std::string> names = b.text ? b.text->class_names : std::vector<std::string>{};
  Json metrics = metrics_json(iou, f1, names);
  metrics["summary"]["pixels"] = cm.total();
  metrics["summary"]["scored_masks"] = scored_truth.size();

  const auto dir = prepare_out(c);
  write_json_file(dir / "metrics.json", metrics);
  std::ofstream(dir / "metrics.csv") << metrics_csv(iou, f1, names);
  write_run_config(c, dir);
  out << "mIoU " << iou.miou << ", mask macro-F1 " << f1.macro_f1 << " -> " << dir.string() << '\n';
  return kOk;
}

int cmd_selftest(const RunConfig& c, std::ostream& out) {
  attention::SelftestOptions o;
  o.grids = c.selftest_grids;
  o.bias_rows = c.selftest_bias_rows;
  o.seed = c.probe.seed;
  const attention::SelftestReport report = attention::run_kernel_selftest(o);
  for (const auto& check : report.checks) {
    out << (check.passed ? "PASS " : "FAIL ") << check.name << " = " << check.value << " (< " << check.threshold
        << ")\n";
  }
  if (!c.out.empty()) {
    const auto dir = prepare_out(c);
    write_json_file(dir / "selftest.json", report.to_json());
    write_run_config(c, dir);
  }
  return report.passed() ? kOk : kNumerical;
}

int cmd_oracle(const RunConfig& c, std::ostream& out) {
  const DatasetBundle b = load_checked_bundle(c);
  require(c.model, "--model");
  const GlccModel model = load_model(c.resolve(c.model));
  if (model.train_embeddings.rows() > c.oracle_max_size) {
    throw ValidationError("model holds " + std::to_string(model.train_embeddings.rows()) +
                          " training masks, above the exact oracle cap of " + std::to_string(c.oracle_max_size));
  }
  const Index n = b.size();
  std::vector<std::int32_t> approx(static_cast<std::size_t>(n));
  std::vector<std::int32_t> exact(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), c.threads, [&](std::size_t i) {
    const Vector e = b.embeddings.row(static_cast<Index>(i)).transpose();
    approx[i] = static_cast<std::int32_t>(classify(model, e).label);
    const Vector p = probe_prior(model, e);
    const Vector star = propagate_inductive_exact(model.train_embeddings, model.propagation_input, p, e,
                                                  model.propagation, c.oracle_max_size);
    exact[i] = static_cast<std::int32_t>(argmax(star));
  });
  Index agree = 0;
  Json rows = Json::array();
  for (Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (approx[s] == exact[s]) ++agree;
    rows.push_back({{"index", i}, {"approximate", approx[s]}, {"exact", exact[s]}});
  }
  const double rate = static_cast<double>(agree) / static_cast<double>(n);
  const auto dir = prepare_out(c);
  write_json_file(dir / "oracle.json", Json{{"queries", n}, {"agreement", rate}, {"masks", rows}});
  write_run_config(c, dir);
  out << "oracle: top-1 agreement " << agree << '/' << n << " = " << rate << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mask classification from precomputed embeddings", "maskcls"};
  app.require_subcommand(1);
  Flags f;

  auto* build = app.add_subcommand("build-graph", "Build the kNN affinity graph of a bundle");
  add_common(build, f);
  add_propagation(build, f);
  build->add_option("--bundle", f.bundle, "Bundle directory");

  auto* boot = app.add_subcommand("bootstrap", "Train the probe and propagate labels over rounds");
  add_common(boot, f);
  add_propagation(boot, f);
  add_training(boot, f);
  boot->add_option("--bundle", f.bundle, "Training bundle directory");
  boot->add_option("--graph", f.graph, "Prebuilt graph directory (built on the fly otherwise)");

  auto* infer = app.add_subcommand("infer", "Classify every mask of a bundle and paint segmentations");
  add_common(infer, f);
  infer->add_option("--bundle", f.bundle, "Bundle directory to classify");
  infer->add_option("--model", f.model, "Model directory from bootstrap");
  infer->add_option("--mode", f.mode, "auto, glcc, probe or zero-shot")
      ->check(CLI::IsMember({"auto", "glcc", "probe", "zero-shot"}));
  infer->add_option("--temperature", f.temperature, "Zero-shot logit scale (default: bundle value)");

  auto* eval = app.add_subcommand("eval", "Score predictions against a bundle's ground truth");
  add_common(eval, f);
  eval->add_option("--pred", f.pred, "Prediction directory from infer");
  eval->add_option("--bundle", f.bundle, "Bundle with ground truth");

  auto* selftest = app.add_subcommand("kernel-selftest", "Check the attention pooling identities on random tensors");
  add_common(selftest, f);
  selftest->add_option("--grids", f.grids, "Random token grids")->check(CLI::PositiveNumber);
  selftest->add_option("--bias-rows", f.bias_rows, "Attention rows for the bias check")->check(CLI::PositiveNumber);
  selftest->add_option("--seed", f.seed, "Random seed");

  auto* oracle = app.add_subcommand("oracle", "Compare inductive classification with the exact joint solve");
  add_common(oracle, f);
  oracle->add_option("--bundle", f.bundle, "Query bundle");
  oracle->add_option("--model", f.model, "Model directory from bootstrap");
  oracle->add_option("--max-size", f.max_size, "Largest training set the dense solve accepts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig c = resolve_config(cmd->get_name(), f);
    if (cmd == build) return cmd_build_graph(c, out);
    if (cmd == boot) return cmd_bootstrap(c, out);
    if (cmd == infer) return cmd_infer(c, out);
    if (cmd == eval) return cmd_eval(c, out);
    if (cmd == selftest) return cmd_selftest(c, out);
    return cmd_oracle(c, out);
  } catch (const CLI::Error& e) {
    err << "maskcls: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "maskcls: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ValidationError& e) {
    err << "maskcls: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "maskcls: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    err << "maskcls: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace maskcls::cli
