#include "maskcls/probe.hpp"

#include <doctest.h>

#include "fixtures.hpp"

#include <cmath>

using namespace maskcls;

namespace {

double finite_difference_error(std::mt19937_64& rng, Index n, Index d, Index k) {
  const Matrix x = testing::random_unit_rows(rng, n, d);
  const Matrix t = testing::random_simplex_rows(rng, n, k);
  std::uniform_real_distribution<double> area(1.0, 50.0);
  Vector a(n);
  for (Index i = 0; i < n; ++i) a(i) = area(rng);
  const Matrix w = testing::random_matrix(rng, k, d);
  const Vector b = Vector::Zero(k);
  const LossGradient lg = probe_loss_gradient(w, b, x, t, a);
  const double h = 1e-6;
  double worst = 0.0;
  for (Index r = 0; r < k; ++r) {
    for (Index c = 0; c < d; ++c) {
      Matrix plus = w, minus = w;
      plus(r, c) += h;
      minus(r, c) -= h;
      const double numeric =
          (probe_loss_gradient(plus, b, x, t, a).loss - probe_loss_gradient(minus, b, x, t, a).loss) / (2 * h);
      worst = std::max(worst, std::abs(numeric - lg.weight_grad(r, c)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("soft cross-entropy matches a hand value") {
  Matrix x(1, 2);
  x << 1, 0;
  Matrix w(2, 2);
  w << 0.4, 0, -1.1, 0;
  Matrix t(1, 2);
  t << 0.3, 0.7;
  const LossGradient lg = probe_loss_gradient(w, Vector::Zero(2), x, t, Vector::Ones(1));
  CHECK(lg.loss == doctest::Approx(1.2514132779827523).epsilon(1e-14));
}

TEST_CASE("analytic gradient agrees with finite differences") {
  std::mt19937_64 rng(40);
  for (int instance = 0; instance < 5; ++instance) CHECK(finite_difference_error(rng, 12, 5, 4) < 1e-4);
}

TEST_CASE("duplicating a row equals doubling its area") {
  std::mt19937_64 rng(41);
  const Matrix x = testing::random_unit_rows(rng, 6, 4);
  const Matrix t = testing::random_simplex_rows(rng, 6, 3);
  const Matrix w = testing::random_matrix(rng, 3, 4);
  Vector a = Vector::Constant(6, 3.0);

  Matrix x_dup(7, 4), t_dup(7, 3);
  x_dup << x, x.row(2);
  t_dup << t, t.row(2);
  const LossGradient dup = probe_loss_gradient(w, Vector::Zero(3), x_dup, t_dup, Vector::Constant(7, 3.0));
  a(2) = 6.0;
  const LossGradient doubled = probe_loss_gradient(w, Vector::Zero(3), x, t, a);
  CHECK(std::abs(dup.loss - doubled.loss) < 1e-12);
  CHECK((dup.weight_grad - doubled.weight_grad).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("probe separates two blobs") {
  std::mt19937_64 rng(42);
  const testing::Clusters c = testing::make_clusters(rng, 200, 6, 2, 0.2);
  ProbeHyper h;
  h.batch_size = 64;
  h.base_learning_rate = 4.0;
  const ProbeModel m = train_probe(c.points, testing::one_hot(c.labels, 2), Vector::Ones(200), h);
  CHECK(m.training_log.size() == 90);
  const Matrix s = probe_scores(m, c.points);
  int correct = 0;
  for (Index i = 0; i < 200; ++i) correct += argmax(s.row(i).transpose()) == c.labels[static_cast<std::size_t>(i)];
  CHECK(correct >= 198);
  CHECK(m.training_log.back() < m.training_log.front());
}

TEST_CASE("probe scores are E U^T") {
  ProbeModel m;
  m.weights = Matrix::Identity(3, 3);
  m.bias = Vector::Zero(3);
  Matrix e(2, 3);
  e << 1, 2, 3, 4, 5, 6;
  CHECK(probe_scores(m, e) == e);
  m.weights.setZero();
  CHECK(probe_scores(m, e).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(43);
  m.weights = testing::random_matrix(rng, 4, 3);
  m.bias = Vector::Zero(4);
  CHECK((probe_scores(m, e) - e * m.weights.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(probe_scores(m, Matrix::Ones(2, 5)), ValidationError);
}

TEST_CASE("full-batch loss is non-increasing at a small learning rate") {
  std::mt19937_64 rng(44);
  const testing::Clusters c = testing::make_clusters(rng, 60, 5, 3, 0.4);
  ProbeHyper h;
  h.epochs = 40;
  h.warmup_epochs = 0;
  h.momentum = 0.0;
  h.base_learning_rate = 0.5 * 256.0 / 60.0;
  const ProbeModel m = train_probe(c.points, testing::one_hot(c.labels, 3), Vector::Ones(60), h);
  for (std::size_t e = 1; e < m.training_log.size(); ++e) CHECK(m.training_log[e] <= m.training_log[e - 1] + 1e-12);
}

TEST_CASE("training is deterministic and order-independent without shuffling") {
  std::mt19937_64 rng(45);
  const testing::Clusters c = testing::make_clusters(rng, 50, 4, 3, 0.4);
  const Matrix t = testing::one_hot(c.labels, 3);
  ProbeHyper h;
  h.epochs = 15;
  h.warmup_epochs = 3;
  const ProbeModel a = train_probe(c.points, t, Vector::Ones(50), h);
  const ProbeModel b = train_probe(c.points, t, Vector::Ones(50), h);
  CHECK(a.weights == b.weights);
  CHECK(a.training_log == b.training_log);

  h.shuffle = false;
  Matrix xp = c.points.colwise().reverse();
  Matrix tp = t.colwise().reverse();
  const ProbeModel fwd = train_probe(c.points, t, Vector::Ones(50), h);
  const ProbeModel rev = train_probe(xp, tp, Vector::Ones(50), h);
  CHECK((fwd.weights - rev.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("learning rate schedule") {
  ProbeHyper h;
  CHECK(h.peak_learning_rate(10000) == doctest::Approx(0.1 * 4096 / 256.0));
  CHECK(h.peak_learning_rate(512) == doctest::Approx(0.2));
  CHECK(h.learning_rate(0.0, 512) == 0.0);
  CHECK(h.learning_rate(5.0, 512) == doctest::Approx(0.1));
  CHECK(h.learning_rate(10.0, 512) == doctest::Approx(0.2));
  CHECK(h.learning_rate(50.0, 512) == doctest::Approx(0.1));
  CHECK(h.learning_rate(90.0, 512) == doctest::Approx(0.0));
}

TEST_CASE("probe hyperparameter validation") {
  ProbeHyper h;
  h.warmup_epochs = 100;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h = ProbeHyper{};
  h.momentum = 1.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  Matrix bad(2, 2);
  bad << 0.5, 0.4, 1, 0;
  CHECK_THROWS_AS(train_probe(x, bad, Vector::Ones(2), ProbeHyper{}), ValidationError);
}

TEST_CASE("a diverging loss names the epoch") {
  Matrix x(2, 1);
  x << 1e200, -1e200;
  Matrix t(2, 2);
  t << 1, 0, 0, 1;
  ProbeHyper h;
  h.epochs = 3;
  h.warmup_epochs = 0;
  h.base_learning_rate = 1e100;
  CHECK_THROWS_WITH_AS(train_probe(x, t, Vector::Ones(2), h), doctest::Contains("epoch 1"), NumericalError);
}
