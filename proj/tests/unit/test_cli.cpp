#include "cli.hpp"

#include "maskcls/bundle.hpp"
#include "maskcls/evaluation.hpp"
#include "maskcls/graph.hpp"
#include "maskcls/tensor_io.hpp"

#include <doctest.h>

#include "fixtures.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

using namespace maskcls;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "maskcls");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::vector<std::string> kFastProbe = {"--epochs", "20", "--warmup-epochs", "2", "--learning-rate", "2",
                                             "--k",      "10", "--threads",       "2"};

std::vector<std::string> with(std::vector<std::string> args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST_CASE("build-graph writes the library graph") {
  testing::TempDir dir;
  const DatasetBundle b = testing::make_bundle({});
  save_bundle(b, dir / "bundle");
  const Result r = call({"build-graph", "--workdir", dir.path().string(), "--bundle", "bundle", "--out", "graph",
                         "--k", "10", "--threads", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  save_graph(build_knn_graph(load_bundle(dir / "bundle").embeddings, 10), dir / "reference");
  for (const auto& entry : fs::directory_iterator(dir / "reference")) {
    CHECK(slurp(entry.path()) == slurp(dir / "graph" / entry.path().filename()));
  }
  CHECK(fs::exists(dir / "graph" / "run_config.json"));
  CHECK(load_graph(dir / "graph").k == 10);
}

TEST_CASE("a corrupt bundle manifest is a data error") {
  testing::TempDir dir;
  save_bundle(testing::make_bundle({}), dir / "bundle");
  std::ofstream(dir / "bundle" / "manifest.json") << "{ not json";
  const Result r = call({"build-graph", "--bundle", (dir / "bundle").string(), "--out", (dir / "g").string()});
  CHECK(r.code == cli::kData);
  CHECK(!r.err.empty());
}

TEST_CASE("bootstrap") {
  testing::TempDir dir;
  SUBCASE("full supervision runs a single round") {
    testing::BundleSpec spec;
    spec.supervision = SupervisionType::Full;
    save_bundle(testing::make_bundle(spec), dir / "bundle");
    const Result r =
        call(with({"bootstrap", "--workdir", dir.path().string(), "--bundle", "bundle", "--out", "model", "--rounds",
                   "4"},
                  kFastProbe));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json rounds = read_json_file(dir / "model" / "rounds.json");
    CHECK(rounds.at("rounds").size() == 1);
  }
  SUBCASE("open vocabulary is refused") {
    testing::BundleSpec spec;
    spec.supervision = SupervisionType::OpenVocabulary;
    save_bundle(testing::make_bundle(spec), dir / "bundle");
    const Result r = call({"bootstrap", "--bundle", (dir / "bundle").string(), "--out", (dir / "model").string()});
    CHECK(r.code == cli::kData);
    CHECK(r.err.find("GLCC not applicable") != std::string::npos);
  }
  SUBCASE("weak supervision reports every round") {
    save_bundle(testing::make_bundle({}), dir / "bundle");
    const Result r = call(with(
        {"bootstrap", "--workdir", dir.path().string(), "--bundle", "bundle", "--out", "model", "--rounds", "3"},
        kFastProbe));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json rounds = read_json_file(dir / "model" / "rounds.json");
    REQUIRE(rounds.at("rounds").size() == 3);
    for (const auto& round : rounds.at("rounds")) CHECK(round.at("pseudo_accuracy").get<double>() > 0.5);
    CHECK(read_json_file(dir / "model" / "run_config.json").at("rounds") == 3);
  }
  SUBCASE("a graph with the wrong k is rejected") {
    save_bundle(testing::make_bundle({}), dir / "bundle");
    REQUIRE(call({"build-graph", "--workdir", dir.path().string(), "--bundle", "bundle", "--out", "graph", "--k",
                  "5"})
                .code == 0);
    const Result r = call(with(
        {"bootstrap", "--workdir", dir.path().string(), "--bundle", "bundle", "--graph", "graph", "--out", "model"},
        kFastProbe));
    CHECK(r.code == cli::kData);
  }
}

TEST_CASE("infer") {
  testing::TempDir dir;
  const DatasetBundle b = testing::make_bundle({});
  save_bundle(b, dir / "bundle");
  const std::string wd = dir.path().string();
  REQUIRE(call(with({"bootstrap", "--workdir", wd, "--bundle", "bundle", "--out", "model"}, kFastProbe)).code == 0);
  const GlccModel model = load_model(dir / "model");

  SUBCASE("glcc matches the library per mask") {
    const Result r = call({"infer", "--workdir", wd, "--bundle", "bundle", "--model", "model", "--out", "pred"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json manifest = read_json_file(dir / "pred" / "manifest.json");
    CHECK(manifest.at("mode") == "glcc");
    const TensorReader reader(dir / "pred", manifest.at("files"));
    const auto labels = reader.i32("labels");
    const Matrix scores = reader.matrix("scores");
    for (Index i = 0; i < b.size(); ++i) {
      const Classification c = classify(model, b.embeddings.row(i).transpose());
      CHECK(labels[static_cast<std::size_t>(i)] == c.label);
      CHECK(scores.row(i) == c.scores.transpose());
    }
    CHECK(fs::exists(dir / "pred" / "predictions.json"));
    CHECK(fs::exists(dir / "pred" / "run_config.json"));
  }
  SUBCASE("alpha zero equals probe-only output") {
    const fs::path zero = dir / "model_alpha0";
    GlccModel m = model;
    m.propagation.alpha = 0.0;
    save_model(m, zero);
    REQUIRE(call({"infer", "--workdir", wd, "--bundle", "bundle", "--model", "model_alpha0", "--out", "a"}).code == 0);
    REQUIRE(call({"infer", "--workdir", wd, "--bundle", "bundle", "--model", "model", "--mode", "probe", "--out",
                  "p"})
                .code == 0);
    CHECK(slurp(dir / "a" / "labels.i32") == slurp(dir / "p" / "labels.i32"));
    CHECK(slurp(dir / "a" / "segmentation.i32") == slurp(dir / "p" / "segmentation.i32"));
  }
  SUBCASE("open-vocabulary bundles use zero-shot") {
    testing::BundleSpec spec;
    spec.supervision = SupervisionType::OpenVocabulary;
    const DatasetBundle ov = testing::make_bundle(spec);
    save_bundle(ov, dir / "ov");
    const Result r = call({"infer", "--workdir", wd, "--bundle", "ov", "--model", "model", "--out", "zs"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json manifest = read_json_file(dir / "zs" / "manifest.json");
    CHECK(manifest.at("mode") == "zero-shot");
    const auto labels = TensorReader(dir / "zs", manifest.at("files")).i32("labels");
    for (Index i = 0; i < ov.size(); ++i) {
      CHECK(labels[static_cast<std::size_t>(i)] == classify_zero_shot(*ov.text, ov.embeddings.row(i).transpose()).label);
    }
  }
  SUBCASE("an unknown mode is a usage error") {
    CHECK(call({"infer", "--workdir", wd, "--bundle", "bundle", "--mode", "nearest", "--out", "x"}).code ==
          cli::kUsage);
  }
}

TEST_CASE("eval") {
  testing::TempDir dir;
  const DatasetBundle b = testing::make_bundle({});
  save_bundle(b, dir / "bundle");
  const std::string wd = dir.path().string();

  SUBCASE("identical prediction and ground truth score one") {
    fs::create_directories(dir / "pred");
    TensorWriter writer(dir / "pred");
    const auto truth = bundle_mask_labels(b);
    std::vector<std::int32_t> raster;
    Json images = Json::array();
    for (std::size_t i = 0; i < b.images.size(); ++i) {
      const auto& g = (*b.ground_truth)[i];
      raster.insert(raster.end(), g.labels.begin(), g.labels.end());
      images.push_back({{"id", b.images[i].id}, {"height", b.images[i].height}, {"width", b.images[i].width}});
    }
    writer.write_i32("labels", "labels.i32", truth);
    writer.write_i32("segmentation", "segmentation.i32", raster);
    write_json_file(dir / "pred" / "manifest.json", Json{{"version", 1},
                                                          {"kind", "predictions"},
                                                          {"K", 3},
                                                          {"ignore_value", 255},
                                                          {"images", images},
                                                          {"files", writer.file_table()}});
    const Result r = call({"eval", "--workdir", wd, "--bundle", "bundle", "--pred", "pred", "--out", "metrics"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json m = read_json_file(dir / "metrics" / "metrics.json");
    CHECK(m.at("summary").at("miou").get<double>() == 1.0);
    CHECK(m.at("summary").at("mask_macro_f1").get<double>() == 1.0);
    CHECK(fs::exists(dir / "metrics" / "metrics.csv"));
  }
  SUBCASE("matches a direct evaluation call") {
    REQUIRE(call(with({"bootstrap", "--workdir", wd, "--bundle", "bundle", "--out", "model"}, kFastProbe)).code == 0);
    REQUIRE(call({"infer", "--workdir", wd, "--bundle", "bundle", "--model", "model", "--out", "pred"}).code == 0);
    REQUIRE(call({"eval", "--workdir", wd, "--bundle", "bundle", "--pred", "pred", "--out", "metrics"}).code == 0);
    const Json manifest = read_json_file(dir / "pred" / "manifest.json");
    const TensorReader reader(dir / "pred", manifest.at("files"));
    const auto labels = reader.i32("labels");
    const auto raster = reader.i32("segmentation");
    ConfusionMatrix cm(3);
    for (std::size_t i = 0; i < b.images.size(); ++i) {
      SegmentationMap p(8, 8, 0, 255);
      std::copy_n(raster.begin() + static_cast<std::ptrdiff_t>(i * 64), 64, p.labels.begin());
      cm.add(p, (*b.ground_truth)[i]);
    }
    const Json m = read_json_file(dir / "metrics" / "metrics.json");
    CHECK(m.at("summary").at("miou").get<double>() == iou_from_confusion(cm).miou);
    CHECK(m.at("summary").at("mask_macro_f1").get<double>() == mask_f1(labels, bundle_mask_labels(b), 3).macro_f1);
  }
  SUBCASE("an empty prediction directory is a data error") {
    fs::create_directories(dir / "empty");
    const Result r = call({"eval", "--workdir", wd, "--bundle", "bundle", "--pred", "empty", "--out", "metrics"});
    CHECK(r.code == cli::kData);
    CHECK(r.err.find("manifest.json") != std::string::npos);
  }
}

TEST_CASE("config files and flags") {
  testing::TempDir dir;
  save_bundle(testing::make_bundle({}), dir / "bundle");
  const std::string wd = dir.path().string();

  SUBCASE("flags override the file") {
    write_json_file(dir / "cfg.json", Json{{"version", 1},
                                           {"propagation", {{"k", 7}}},
                                           {"paths", {{"bundle", "bundle"}, {"out", "g_file"}}}});
    REQUIRE(call({"build-graph", "--workdir", wd, "--config", "cfg.json"}).code == 0);
    CHECK(load_graph(dir / "g_file").k == 7);
    REQUIRE(call({"build-graph", "--workdir", wd, "--config", "cfg.json", "--k", "4", "--out", "g_flag"}).code == 0);
    CHECK(load_graph(dir / "g_flag").k == 4);
    CHECK(read_json_file(dir / "g_flag" / "run_config.json").at("propagation").at("k") == 4);
  }
  SUBCASE("a config without a version is rejected") {
    write_json_file(dir / "cfg.json", Json{{"propagation", {{"k", 7}}}});
    CHECK(call({"build-graph", "--workdir", wd, "--config", "cfg.json", "--bundle", "bundle", "--out", "g"}).code ==
          cli::kData);
  }
  SUBCASE("run_config.json reproduces a run") {
    REQUIRE(call(with({"bootstrap", "--workdir", wd, "--bundle", "bundle", "--out", "m1"}, kFastProbe)).code == 0);
    REQUIRE(call({"bootstrap", "--config", (dir / "m1" / "run_config.json").string(), "--out", "m2"}).code == 0);
    for (const char* f : {"probe_weights.f64", "propagated.f64", "manifest.json"}) {
      CHECK(slurp(dir / "m1" / f) == slurp(dir / "m2" / f));
    }
  }
}

TEST_CASE("usage errors") {
  CHECK(call({}).code == cli::kUsage);
  CHECK(call({"frobnicate"}).code == cli::kUsage);
  CHECK(call({"build-graph", "--k", "abc"}).code == cli::kUsage);
  CHECK(call({"build-graph", "--out", "/tmp/x"}).code == cli::kUsage);
  CHECK(call({"--help"}).code == cli::kOk);
}

TEST_CASE("kernel-selftest passes") {
  const Result r = call({"kernel-selftest", "--grids", "5", "--bias-rows", "50"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS forbidden_attention_mass") != std::string::npos);
}

TEST_CASE("oracle compares against the exact solve") {
  testing::TempDir dir;
  testing::BundleSpec spec;
  spec.images = 20;
  save_bundle(testing::make_bundle(spec), dir / "bundle");
  const std::string wd = dir.path().string();
  REQUIRE(call(with({"bootstrap", "--workdir", wd, "--bundle", "bundle", "--out", "model"}, kFastProbe)).code == 0);
  const Result r = call({"oracle", "--workdir", wd, "--bundle", "bundle", "--model", "model", "--out", "oracle"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const Json j = read_json_file(dir / "oracle" / "oracle.json");
  CHECK(j.at("queries") == 80);
  CHECK(j.at("agreement").get<double>() >= 0.9);
  CHECK(call({"oracle", "--workdir", wd, "--bundle", "bundle", "--model", "model", "--out", "o2", "--max-size", "10"})
            .code == cli::kData);
}
