#include "fixtures.hpp"

#include "maskcls/propagation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <string>

namespace maskcls::testing {

TempDir::TempDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "maskcls-test-XXXXXX").string();
  if (mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Matrix random_unit_rows(std::mt19937_64& rng, Index rows, Index cols) {
  return normalize_rows(random_matrix(rng, rows, cols));
}

namespace {

Matrix to_float_precision(const Matrix& m) { return m.cast<float>().cast<double>(); }

}  // namespace

Matrix random_float_unit_rows(std::mt19937_64& rng, Index rows, Index cols) {
  return to_float_precision(random_unit_rows(rng, rows, cols));
}

Matrix random_simplex_rows(std::mt19937_64& rng, Index rows, Index cols) {
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

Clusters sample_clusters(std::mt19937_64& rng, const Matrix& centers, Index n, double spread) {
  Clusters c;
  c.centers = centers;
  const Index k = centers.rows();
  c.points = Matrix(n, centers.cols());
  c.labels.resize(static_cast<std::size_t>(n));
  const Matrix noise = random_matrix(rng, n, centers.cols());
  for (Index i = 0; i < n; ++i) {
    const auto label = static_cast<std::int32_t>(i % k);
    c.labels[static_cast<std::size_t>(i)] = label;
    c.points.row(i) = centers.row(label) + spread * noise.row(i);
  }
  c.points = normalize_rows(c.points);
  return c;
}

Clusters make_clusters(std::mt19937_64& rng, Index n, Index dim, Index classes, double spread) {
  const Matrix centers = random_unit_rows(rng, classes, dim);
  return sample_clusters(rng, centers, n, spread);
}

Matrix one_hot(const std::vector<std::int32_t>& labels, Index classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Index>(i), labels[i]) = 1.0;
  return m;
}

std::vector<std::int32_t> flip_labels(std::mt19937_64& rng, const std::vector<std::int32_t>& labels, Index classes,
                                      double rate) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::lround(rate * static_cast<double>(labels.size())));
  std::uniform_int_distribution<std::int32_t> shift(1, static_cast<std::int32_t>(classes) - 1);
  std::vector<std::int32_t> out = labels;
  for (std::size_t i = 0; i < count; ++i) {
    auto& l = out[order[i]];
    l = static_cast<std::int32_t>((l + shift(rng)) % classes);
  }
  return out;
}

Matrix dense_propagation(const AffinityGraph& graph, const Matrix& seeds, double alpha) {
  const Matrix s = Matrix(graph.normalized);
  const Matrix system = Matrix::Identity(s.rows(), s.cols()) - alpha * s;
  return system.fullPivLu().solve(seeds);
}

Matrix brute_force_affinity(const Matrix& x, int k) {
  const Index n = x.rows();
  Matrix s = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> others;
    for (Index j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(),
                     [&](Index a, Index b) { return x.row(i).dot(x.row(a)) > x.row(i).dot(x.row(b)); });
    for (int t = 0; t < k; ++t) {
      const Index j = others[static_cast<std::size_t>(t)];
      s(i, j) = std::max(0.0, x.row(i).dot(x.row(j)));
    }
  }
  return s;
}

Matrix angle_rows(const std::vector<double>& degrees) {
  Matrix x(static_cast<Index>(degrees.size()), 2);
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const double r = degrees[i] * 3.14159265358979323846 / 180.0;
    x(static_cast<Index>(i), 0) = std::cos(r);
    x(static_cast<Index>(i), 1) = std::sin(r);
  }
  return x;
}

Dominance duplicate_dominance(const Matrix& base, Index dup, int m, const Vector& query) {
  Matrix x(base.rows() + m - 1, base.cols());
  x.topRows(base.rows()) = base;
  for (int c = 1; c < m; ++c) x.row(base.rows() + c - 1) = base.row(dup);
  const Index n = x.rows();
  const AffinityGraph g = build_knn_graph(x, static_cast<int>(n - 1));
  const InductiveWeights w = inductive_weights(x, g.degrees, query, static_cast<int>(n));
  double copies = 0.0, rest = 0.0, copies_l1 = 0.0, rest_l1 = 0.0;
  for (std::size_t i = 0; i < w.neighbors.size(); ++i) {
    const Index j = w.neighbors[i];
    const bool is_copy = j == dup || j >= base.rows();
    (is_copy ? copies : rest) += w.weights(static_cast<Index>(i));
    (is_copy ? copies_l1 : rest_l1) += w.similarities(static_cast<Index>(i));
  }
  return {copies / rest, copies_l1 / rest_l1};
}

DatasetBundle make_bundle(const BundleSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const int side = 8;
  const int half = side / 2;
  const Matrix centers = random_unit_rows(rng, spec.classes, spec.dim);
  std::uniform_int_distribution<int> pick_class(0, spec.classes - 1);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> noise;

  DatasetBundle b;
  std::vector<std::int32_t> mask_class;
  std::vector<std::pair<int, int>> image_classes;
  std::vector<SegmentationMap> truth;
  for (int img = 0; img < spec.images; ++img) {
    const std::string id = "img" + std::to_string(img);
    b.images.push_back({id, side, side});
    const int a = pick_class(rng);
    int c = pick_class(rng);
    while (c == a) c = pick_class(rng);
    image_classes.emplace_back(a, c);
    SegmentationMap gt(side, side, 0, b.ignore_value);
    for (int q = 0; q < 4; ++q) {
      const int cls = q == 0 ? a : q == 1 ? c : (coin(rng) ? a : c);
      std::vector<std::uint8_t> raster(static_cast<std::size_t>(side) * side, 0);
      const int y0 = (q / 2) * half;
      const int x0 = (q % 2) * half;
      for (int y = y0; y < y0 + half; ++y) {
        for (int x = x0; x < x0 + half; ++x) {
          raster[static_cast<std::size_t>(y) * side + x] = 1;
          gt.at(y, x) = cls;
        }
      }
      b.masks.push_back(MaskRecord::from_raster(id, side, side, raster));
      mask_class.push_back(cls);
    }
    truth.push_back(std::move(gt));
  }
  b.ground_truth = std::move(truth);

  const Index n = static_cast<Index>(b.masks.size());
  Matrix x(n, spec.dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < spec.dim; ++j) {
      x(i, j) = centers(mask_class[static_cast<std::size_t>(i)], j) + spec.spread * noise(rng);
    }
  }
  b.embeddings = to_float_precision(normalize_rows(x));

  TextClassifier text;
  Matrix w = centers;
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) w(i, j) += spec.text_noise * noise(rng) / std::sqrt(double(spec.dim));
  }
  text.weights = to_float_precision(normalize_rows(w));
  for (int c = 0; c < spec.classes; ++c) text.class_names.push_back("class" + std::to_string(c));
  text.has_background = spec.has_background;
  b.text = std::move(text);

  b.supervision.type = spec.supervision;
  const Matrix hard = one_hot(mask_class, spec.classes);
  switch (spec.supervision) {
    case SupervisionType::Full:
      b.supervision.labels = hard;
      break;
    case SupervisionType::Semi: {
      Matrix y = Matrix::Zero(n, spec.classes);
      b.supervision.labeled.assign(static_cast<std::size_t>(n), 0);
      std::bernoulli_distribution labeled(spec.labeled_fraction);
      for (Index i = 0; i < n; ++i) {
        if (i == 0 || labeled(rng)) {
          b.supervision.labeled[static_cast<std::size_t>(i)] = 1;
          y.row(i) = hard.row(i);
        }
      }
      b.supervision.labels = y;
      break;
    }
    case SupervisionType::Weak: {
      Matrix y = Matrix::Zero(n, spec.classes);
      for (Index i = 0; i < n; ++i) {
        const auto [a, c] = image_classes[static_cast<std::size_t>(i / 4)];
        y(i, a) = 1.0;
        y(i, c) = 1.0;
      }
      b.supervision.labels = y;
      break;
    }
    case SupervisionType::OpenVocabulary:
      break;
  }
  b.validate();
  return b;
}

}  // namespace maskcls::testing
