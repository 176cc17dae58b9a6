#include "maskcls/glcc.hpp"

#include <doctest.h>

#include "fixtures.hpp"

#include <cmath>

using namespace maskcls;

namespace {

BootstrapConfig small_config() {
  BootstrapConfig c;
  c.propagation.k = 10;
  c.probe.epochs = 30;
  c.probe.warmup_epochs = 3;
  c.probe.base_learning_rate = 2.0;
  return c;
}

}  // namespace

TEST_CASE("full supervision runs one round and keeps the labels") {
  testing::BundleSpec spec;
  spec.supervision = SupervisionType::Full;
  const DatasetBundle b = testing::make_bundle(spec);
  BootstrapConfig c = small_config();
  c.rounds = 3;
  const GlccModel m = bootstrap(b, c);
  CHECK(m.round_count == 1);
  CHECK(m.rounds.size() == 1);
  CHECK(m.propagated == *b.supervision.labels);
  CHECK(m.propagation_input == *b.supervision.labels);
  CHECK(m.degrees.size() == b.size());
  CHECK(m.rounds[0].pseudo_accuracy == 1.0);
}

TEST_CASE("weak bootstrap does not lose agreement in the second round") {
  const DatasetBundle b = testing::make_bundle({});
  const GlccModel m = bootstrap(b, small_config());
  REQUIRE(m.rounds.size() == 2);
  MESSAGE("round pseudo accuracies " << m.rounds[0].pseudo_accuracy << " " << m.rounds[1].pseudo_accuracy);
  CHECK(m.rounds[1].pseudo_accuracy >= m.rounds[0].pseudo_accuracy);
  CHECK(m.rounds[0].cg_residual < 1e-6);
  for (Index i = 0; i < m.propagation_input.rows(); ++i) {
    CHECK(std::abs(m.propagation_input.row(i).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("bootstrap preconditions") {
  SUBCASE("zero rounds") {
    BootstrapConfig c = small_config();
    c.rounds = 0;
    CHECK_THROWS_AS(bootstrap(testing::make_bundle({}), c), ValidationError);
  }
  SUBCASE("open vocabulary") {
    testing::BundleSpec spec;
    spec.supervision = SupervisionType::OpenVocabulary;
    CHECK_THROWS_WITH_AS(bootstrap(testing::make_bundle(spec), small_config()),
                         doctest::Contains("GLCC not applicable"), ValidationError);
  }
  SUBCASE("semi with nothing labeled") {
    testing::BundleSpec spec;
    spec.supervision = SupervisionType::Semi;
    DatasetBundle b = testing::make_bundle(spec);
    std::fill(b.supervision.labeled.begin(), b.supervision.labeled.end(), 0);
    b.supervision.labels->setZero();
    CHECK_THROWS_WITH_AS(bootstrap(b, small_config()), doctest::Contains("empty labeled set"), ValidationError);
  }
}

TEST_CASE("semi bootstrap keeps labeled rows") {
  testing::BundleSpec spec;
  spec.supervision = SupervisionType::Semi;
  const DatasetBundle b = testing::make_bundle(spec);
  const GlccModel m = bootstrap(b, small_config());
  for (Index i = 0; i < b.size(); ++i) {
    if (b.supervision.labeled[static_cast<std::size_t>(i)]) {
      CHECK(m.propagation_input.row(i) == b.supervision.labels->row(i));
    }
  }
}

TEST_CASE("classification falls back to the probe") {
  const DatasetBundle b = testing::make_bundle({});
  GlccModel m = bootstrap(b, small_config());
  const Vector e = b.embeddings.row(5).transpose();

  SUBCASE("alpha zero") {
    m.propagation.alpha = 0.0;
    const Classification c = classify(m, e);
    const Classification p = classify_probe_only(m, e);
    CHECK((c.scores - p.scores).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(c.label == p.label);
  }
  SUBCASE("query with no positive neighbour") {
    m.train_embeddings.setZero();
    m.train_embeddings.col(0).setOnes();
    const Vector orth = Vector::Unit(e.size(), 1);
    CHECK((classify(m, orth).scores - probe_prior(m, orth)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("classification agrees with the exact joint solve") {
  std::mt19937_64 rng(50);
  const testing::Clusters train = testing::make_clusters(rng, 120, 6, 3, 0.3);
  const testing::Clusters test = testing::sample_clusters(rng, train.centers, 20, 0.3);
  BootstrapInputs in;
  in.embeddings = &train.points;
  in.areas = Vector::Ones(120);
  in.supervision = SupervisionType::Full;
  in.labels = testing::one_hot(train.labels, 3);
  BootstrapConfig c = small_config();
  c.propagation.cg_tolerance = 1e-10;
  const GlccModel m = bootstrap(in, c);
  int agree = 0;
  for (Index q = 0; q < 20; ++q) {
    const Vector e = test.points.row(q).transpose();
    const Vector exact = propagate_inductive_exact(m.train_embeddings, m.propagation_input, probe_prior(m, e), e,
                                                   m.propagation);
    agree += classify(m, e).label == argmax(exact);
  }
  CHECK(agree >= 18);
}

TEST_CASE("zero-shot classification") {
  TextClassifier text;
  text.weights = Matrix::Identity(3, 3);
  text.class_names = {"a", "b", "c"};
  Vector e(3);
  e << 0.6, 0.8, 0.0;
  const Classification c = classify_zero_shot(text, e);
  CHECK(c.label == 1);
  CHECK(c.confidence == doctest::Approx(1.0 / (1.0 + std::exp(-20.0) + std::exp(-80.0))));
  const Classification cold = classify_zero_shot(text, e, 1.0);
  CHECK(cold.label == 1);
  CHECK(cold.confidence < c.confidence);
  CHECK(zero_shot_scores(text, e.transpose(), 2.0)(0, 1) == doctest::Approx(1.6));
  CHECK_THROWS_AS(classify_zero_shot(text, e, 0.0), ValidationError);
  CHECK_THROWS_AS(classify_zero_shot(text, Vector::Ones(4), 1.0), ValidationError);
}

TEST_CASE("bootstrap is deterministic") {
  const DatasetBundle b = testing::make_bundle({});
  const GlccModel a = bootstrap(b, small_config());
  const GlccModel c = bootstrap(b, small_config());
  CHECK(a.probe.weights == c.probe.weights);
  CHECK(a.propagated == c.propagated);
  const AffinityGraph g = build_knn_graph(b.embeddings, 10);
  const GlccModel d = bootstrap(b, small_config(), &g);
  CHECK(d.propagated == a.propagated);
}

TEST_CASE("models round-trip through disk") {
  const DatasetBundle b = testing::make_bundle({});
  const GlccModel m = bootstrap(b, small_config());
  testing::TempDir dir;
  save_model(m, dir.path());
  const GlccModel back = load_model(dir.path());
  CHECK(back.probe.weights == m.probe.weights);
  CHECK(back.probe.training_log == m.probe.training_log);
  CHECK(back.propagated == m.propagated);
  CHECK(back.degrees == m.degrees);
  CHECK(back.propagation.k == m.propagation.k);
  CHECK(back.probe_hyper.epochs == m.probe_hyper.epochs);
  CHECK(back.supervision == m.supervision);
  CHECK(back.rounds.size() == m.rounds.size());
  const Vector e = b.embeddings.row(3).transpose();
  CHECK(classify(back, e).scores == classify(m, e).scores);

  write_json_file(dir / "manifest.json", Json{{"kind", "graph"}});
  CHECK_THROWS_AS(load_model(dir.path()), ValidationError);
}
