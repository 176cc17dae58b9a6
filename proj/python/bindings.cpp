#include "maskcls/attention.hpp"
#include "maskcls/bundle.hpp"
#include "maskcls/evaluation.hpp"
#include "maskcls/glcc.hpp"
#include "maskcls/graph.hpp"
#include "maskcls/probe.hpp"
#include "maskcls/propagation.hpp"
#include "maskcls/selftest.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace maskcls;

namespace {

std::vector<std::uint8_t> to_bytes(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

SegmentationMap to_map(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& a,
                       std::int32_t ignore) {
  if (a.ndim() != 2) throw ValidationError("segmentation maps must be 2-D");
  SegmentationMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 0, ignore);
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

py::array_t<std::int32_t> from_map(const SegmentationMap& m) {
  py::array_t<std::int32_t> out({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

py::dict classification_dict(const Classification& c) {
  py::dict d;
  d["label"] = c.label;
  d["confidence"] = c.confidence;
  d["scores"] = c.scores;
  return d;
}

}  // namespace

PYBIND11_MODULE(_maskcls, m) {
  m.doc() = "Mask classification from precomputed embeddings";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::enum_<SupervisionType>(m, "SupervisionType")
      .value("FULL", SupervisionType::Full)
      .value("SEMI", SupervisionType::Semi)
      .value("WEAK", SupervisionType::Weak)
      .value("OPEN_VOCABULARY", SupervisionType::OpenVocabulary);
  m.def("parse_supervision", &parse_supervision);

  py::class_<MaskRecord>(m, "MaskRecord")
      .def_static(
          "from_raster",
          [](const std::string& image_id, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
            if (a.ndim() != 2) throw ValidationError("mask rasters must be 2-D");
            const auto bytes = to_bytes(a);
            return MaskRecord::from_raster(image_id, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), bytes);
          },
          py::arg("image_id"), py::arg("raster"))
      .def_readonly("image_id", &MaskRecord::image_id)
      .def_readonly("height", &MaskRecord::height)
      .def_readonly("width", &MaskRecord::width)
      .def_readonly("area", &MaskRecord::area)
      .def("decode", [](const MaskRecord& r) {
        py::array_t<std::uint8_t> out({r.height, r.width});
        const auto bytes = r.decode();
        std::copy(bytes.begin(), bytes.end(), out.mutable_data());
        return out;
      });

  py::class_<ImageInfo>(m, "ImageInfo")
      .def(py::init([](std::string id, int h, int w) { return ImageInfo{std::move(id), h, w}; }), py::arg("id"),
           py::arg("height"), py::arg("width"))
      .def_readwrite("id", &ImageInfo::id)
      .def_readwrite("height", &ImageInfo::height)
      .def_readwrite("width", &ImageInfo::width);

  py::class_<TextClassifier>(m, "TextClassifier")
      .def(py::init([](Matrix weights, std::vector<std::string> names, bool background, double temperature) {
             TextClassifier t{std::move(weights), std::move(names), background, temperature};
             t.validate();
             return t;
           }),
           py::arg("weights"), py::arg("class_names"), py::arg("has_background") = false,
           py::arg("temperature") = 100.0)
      .def_readwrite("weights", &TextClassifier::weights)
      .def_readwrite("class_names", &TextClassifier::class_names)
      .def_readwrite("has_background", &TextClassifier::has_background)
      .def_readwrite("temperature", &TextClassifier::temperature);

  py::class_<DatasetBundle>(m, "DatasetBundle")
      .def(py::init<>())
      .def_readwrite("images", &DatasetBundle::images)
      .def_readwrite("masks", &DatasetBundle::masks)
      .def_readwrite("embeddings", &DatasetBundle::embeddings)
      .def_readwrite("text", &DatasetBundle::text)
      .def_readwrite("ignore_value", &DatasetBundle::ignore_value)
      .def_property(
          "supervision", [](const DatasetBundle& b) { return b.supervision.type; },
          [](DatasetBundle& b, SupervisionType t) { b.supervision.type = t; })
      .def_property(
          "labels", [](const DatasetBundle& b) { return b.supervision.labels; },
          [](DatasetBundle& b, std::optional<Matrix> y) { b.supervision.labels = std::move(y); })
      .def_property(
          "labeled", [](const DatasetBundle& b) { return b.supervision.labeled; },
          [](DatasetBundle& b, std::vector<std::uint8_t> f) { b.supervision.labeled = std::move(f); })
      .def_property(
          "ground_truth",
          [](const DatasetBundle& b) -> py::object {
            if (!b.ground_truth) return py::none();
            py::list out;
            for (const auto& g : *b.ground_truth) out.append(from_map(g));
            return out;
          },
          [](DatasetBundle& b, const py::object& maps) {
            if (maps.is_none()) {
              b.ground_truth.reset();
              return;
            }
            std::vector<SegmentationMap> out;
            for (const auto& item : maps) {
              out.push_back(to_map(item.cast<py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>>(),
                                   b.ignore_value));
            }
            b.ground_truth = std::move(out);
          })
      .def_property_readonly("size", &DatasetBundle::size)
      .def_property_readonly("num_classes", &DatasetBundle::num_classes)
      .def("areas", &DatasetBundle::areas)
      .def("validate", &DatasetBundle::validate);
  m.def("load_bundle", &load_bundle, py::arg("path"));
  m.def("save_bundle", &save_bundle, py::arg("bundle"), py::arg("path"));

  py::class_<AffinityGraph>(m, "AffinityGraph")
      .def_readonly("affinity", &AffinityGraph::affinity)
      .def_readonly("normalized", &AffinityGraph::normalized)
      .def_readonly("degrees", &AffinityGraph::degrees)
      .def_readonly("k", &AffinityGraph::k)
      .def_property_readonly("size", &AffinityGraph::size);
  m.def("build_knn_graph", &build_knn_graph, py::arg("x"), py::arg("k"), py::arg("threads") = 1);
  m.def("save_graph", &save_graph, py::arg("graph"), py::arg("path"));
  m.def("load_graph", &load_graph, py::arg("path"));

  py::class_<PropagationConfig>(m, "PropagationConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &PropagationConfig::alpha)
      .def_readwrite("k", &PropagationConfig::k)
      .def_readwrite("cg_tolerance", &PropagationConfig::cg_tolerance)
      .def_readwrite("cg_max_iterations", &PropagationConfig::cg_max_iterations);

  m.def(
      "propagate_transductive",
      [](const AffinityGraph& g, const Matrix& seeds, const PropagationConfig& c) {
        return propagate_transductive(g, {seeds, LabelKind::ProbeRefined}, c).data;
      },
      py::arg("graph"), py::arg("seeds"), py::arg("config") = PropagationConfig{});
  m.def(
      "propagate_inductive",
      [](const Matrix& x, const Vector& degrees, const Vector& query, const Vector& prior, const Matrix& propagated,
         const PropagationConfig& c) {
        return propagate_inductive(prior, inductive_weights(x, degrees, query, c.k), propagated, c.alpha);
      },
      py::arg("x"), py::arg("degrees"), py::arg("query"), py::arg("prior"), py::arg("propagated"),
      py::arg("config") = PropagationConfig{});
  m.def("propagate_inductive_exact", &propagate_inductive_exact, py::arg("x"), py::arg("seeds"), py::arg("prior"),
        py::arg("query"), py::arg("config") = PropagationConfig{}, py::arg("max_size") = kExactOracleMaxSize);
  m.def(
      "supplement",
      [](const Matrix& labels, const std::vector<std::uint8_t>& labeled, const Matrix& scores, SupervisionType type,
         double c) { return supplement(labels, labeled, scores, type, c).data; },
      py::arg("labels"), py::arg("labeled"), py::arg("scores"), py::arg("supervision"),
      py::arg("filter_constant") = 1e4);

  py::class_<ProbeHyper>(m, "ProbeHyper")
      .def(py::init<>())
      .def_readwrite("epochs", &ProbeHyper::epochs)
      .def_readwrite("batch_size", &ProbeHyper::batch_size)
      .def_readwrite("base_learning_rate", &ProbeHyper::base_learning_rate)
      .def_readwrite("warmup_epochs", &ProbeHyper::warmup_epochs)
      .def_readwrite("momentum", &ProbeHyper::momentum)
      .def_readwrite("weight_decay", &ProbeHyper::weight_decay)
      .def_readwrite("use_bias", &ProbeHyper::use_bias)
      .def_readwrite("shuffle", &ProbeHyper::shuffle)
      .def_readwrite("seed", &ProbeHyper::seed);
  py::class_<ProbeModel>(m, "ProbeModel")
      .def_readonly("weights", &ProbeModel::weights)
      .def_readonly("bias", &ProbeModel::bias)
      .def_readonly("training_log", &ProbeModel::training_log);
  m.def("train_probe", &train_probe, py::arg("x"), py::arg("targets"), py::arg("areas"),
        py::arg("hyper") = ProbeHyper{});
  m.def("probe_scores", &probe_scores, py::arg("model"), py::arg("embeddings"));

  py::class_<BootstrapConfig>(m, "BootstrapConfig")
      .def(py::init<>())
      .def_readwrite("propagation", &BootstrapConfig::propagation)
      .def_readwrite("probe", &BootstrapConfig::probe)
      .def_readwrite("rounds", &BootstrapConfig::rounds)
      .def_readwrite("zero_shot_temperature", &BootstrapConfig::zero_shot_temperature)
      .def_readwrite("probe_temperature", &BootstrapConfig::probe_temperature)
      .def_readwrite("weak_filter_constant", &BootstrapConfig::weak_filter_constant)
      .def_readwrite("threads", &BootstrapConfig::threads);
  py::class_<RoundReport>(m, "RoundReport")
      .def_readonly("round", &RoundReport::round)
      .def_readonly("pseudo_accuracy", &RoundReport::pseudo_accuracy)
      .def_readonly("refined_accuracy", &RoundReport::refined_accuracy)
      .def_readonly("propagated_accuracy", &RoundReport::propagated_accuracy)
      .def_readonly("final_probe_loss", &RoundReport::final_probe_loss)
      .def_readonly("cg_iterations", &RoundReport::cg_iterations);
  py::class_<GlccModel>(m, "GlccModel")
      .def_readonly("probe", &GlccModel::probe)
      .def_readonly("propagated", &GlccModel::propagated)
      .def_readonly("propagation_input", &GlccModel::propagation_input)
      .def_readonly("degrees", &GlccModel::degrees)
      .def_readonly("rounds", &GlccModel::rounds)
      .def_readwrite("propagation", &GlccModel::propagation)
      .def_readonly("round_count", &GlccModel::round_count)
      .def_property_readonly("classes", &GlccModel::classes);
  m.def(
      "bootstrap",
      [](const DatasetBundle& b, const BootstrapConfig& c, const AffinityGraph* g) { return bootstrap(b, c, g); },
      py::arg("bundle"), py::arg("config") = BootstrapConfig{}, py::arg("graph") = nullptr);
  m.def(
      "classify", [](const GlccModel& model, const Vector& e) { return classification_dict(classify(model, e)); },
      py::arg("model"), py::arg("embedding"));
  m.def(
      "classify_probe_only",
      [](const GlccModel& model, const Vector& e) { return classification_dict(classify_probe_only(model, e)); },
      py::arg("model"), py::arg("embedding"));
  m.def(
      "classify_zero_shot",
      [](const TextClassifier& t, const Vector& e, std::optional<double> temp) {
        return classification_dict(classify_zero_shot(t, e, temp));
      },
      py::arg("text"), py::arg("embedding"), py::arg("temperature") = py::none());
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "miou",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt, Index classes,
         std::int32_t ignore) {
        const IouResult r = miou(to_map(pred, ignore), to_map(gt, ignore), classes);
        return py::make_tuple(r.miou, r.per_class);
      },
      py::arg("pred"), py::arg("gt"), py::arg("classes"), py::arg("ignore_value") = 255);
  m.def(
      "mask_f1",
      [](const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt, Index classes) {
        const F1Result r = mask_f1(pred, gt, classes);
        return py::make_tuple(r.macro_f1, r.per_class);
      },
      py::arg("pred"), py::arg("gt"), py::arg("classes"));

  auto att = m.def_submodule("attention", "Mask-biased attention pooling");
  py::enum_<attention::PoolingVariant>(att, "PoolingVariant")
      .value("NAIVE_CLIP", attention::PoolingVariant::NaiveCLIP)
      .value("CROSS_ATTENTION", attention::PoolingVariant::CrossAttention)
      .value("MASK_CLIP", attention::PoolingVariant::MaskCLIP)
      .value("DBA_ORIGINAL", attention::PoolingVariant::DBAOriginal)
      .value("DBA_APPROX", attention::PoolingVariant::DBAApprox)
      .value("DBA_APPROX_NO_RESIDUAL", attention::PoolingVariant::DBAApproxNoResidual)
      .value("DBA_MULTI_HEAD", attention::PoolingVariant::DBAMultiHead);
  py::enum_<attention::UpsampleMode>(att, "UpsampleMode")
      .value("BILINEAR", attention::UpsampleMode::Bilinear)
      .value("IDENTITY", attention::UpsampleMode::Identity);
  py::class_<attention::TokenGrid>(att, "TokenGrid")
      .def(py::init([](Matrix tokens, int gh, int gw) {
             attention::TokenGrid g{std::move(tokens), gh, gw};
             g.validate();
             return g;
           }),
           py::arg("tokens"), py::arg("grid_h"), py::arg("grid_w"));
  py::class_<attention::HeadWeights>(att, "HeadWeights")
      .def(py::init([](Matrix wq, Vector bq, Matrix wk, Vector bk, Matrix wv, Vector bv, Matrix wp, Vector bp,
                       int heads, std::optional<Vector> ln_gain, std::optional<Vector> ln_bias) {
             attention::HeadWeights w;
             w.ln = attention::LayerNorm::identity(wq.cols());
             if (ln_gain) w.ln.gain = *ln_gain;
             if (ln_bias) w.ln.bias = *ln_bias;
             w.w_q = std::move(wq);
             w.b_q = std::move(bq);
             w.w_k = std::move(wk);
             w.b_k = std::move(bk);
             w.w_v = std::move(wv);
             w.b_v = std::move(bv);
             w.w_p = std::move(wp);
             w.b_p = std::move(bp);
             w.head_count = heads;
             w.validate();
             return w;
           }),
           py::arg("w_q"), py::arg("b_q"), py::arg("w_k"), py::arg("b_k"), py::arg("w_v"), py::arg("b_v"),
           py::arg("w_p"), py::arg("b_p"), py::arg("head_count") = 1, py::arg("ln_gain") = py::none(),
           py::arg("ln_bias") = py::none());
  py::class_<attention::OutputHead>(att, "OutputHead")
      .def_static(
          "linear",
          [](Matrix g, attention::UpsampleMode mode) {
            return attention::OutputHead{attention::LinearHead{std::move(g)}, mode};
          },
          py::arg("g"), py::arg("upsample") = attention::UpsampleMode::Bilinear);
  py::class_<attention::MaskPlan>(att, "MaskPlan")
      .def_readonly("token_mask", &attention::MaskPlan::token_mask)
      .def_property_readonly("pixel_area", &attention::MaskPlan::pixel_area)
      .def_property_readonly("token_area", &attention::MaskPlan::token_area);
  att.def(
      "make_mask_plan",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask, int gh, int gw,
         double c) {
        if (mask.ndim() != 2) throw ValidationError("masks must be 2-D");
        const auto bytes = to_bytes(mask);
        return attention::make_mask_plan(bytes, static_cast<int>(mask.shape(0)), static_cast<int>(mask.shape(1)), gh,
                                         gw, c);
      },
      py::arg("mask"), py::arg("grid_h"), py::arg("grid_w"), py::arg("bias_constant") = attention::kDefaultBiasConstant);
  att.def(
      "pool_mask_embedding",
      [](const attention::TokenGrid& grid, const attention::HeadWeights& w, const attention::OutputHead& head,
         const attention::MaskPlan& plan, attention::PoolingVariant variant, bool residual, double divisor) {
        return attention::pool_mask_embedding(grid, w, head, plan, variant, {residual, divisor});
      },
      py::arg("grid"), py::arg("weights"), py::arg("head"), py::arg("plan"),
      py::arg("variant") = attention::PoolingVariant::DBAApprox, py::arg("include_residual") = true,
      py::arg("scale_divisor") = 0.0);
  att.def(
      "kernel_selftest",
      [](int grids, int bias_rows, std::uint64_t seed) {
        attention::SelftestOptions o;
        o.grids = grids;
        o.bias_rows = bias_rows;
        o.seed = seed;
        const auto report = attention::run_kernel_selftest(o);
        py::dict out;
        for (const auto& c : report.checks) out[py::str(c.name)] = py::make_tuple(c.passed, c.value, c.threshold);
        return out;
      },
      py::arg("grids") = 100, py::arg("bias_rows") = 1000, py::arg("seed") = 0);
}
