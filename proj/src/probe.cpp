#include "maskcls/probe.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace maskcls {

void ProbeHyper::validate() const {
  if (epochs <= 0 || batch_size <= 0 || warmup_epochs < 0 || warmup_epochs > epochs) {
    throw ValidationError("probe epochs, batch size and warmup must be positive with warmup <= epochs");
  }
  if (!(base_learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0) {
    throw ValidationError("probe learning rate must be positive and momentum in [0, 1)");
  }
}

int ProbeHyper::effective_batch(Index n) const {
  return static_cast<int>(std::min<Index>(batch_size, n));
}

double ProbeHyper::peak_learning_rate(Index n) const {
  return base_learning_rate * effective_batch(n) / 256.0;
}

double ProbeHyper::learning_rate(double t, Index n) const {
  const double peak = peak_learning_rate(n);
  if (t < warmup_epochs) return peak * t / warmup_epochs;
  if (epochs == warmup_epochs) return peak;
  const double progress = (t - warmup_epochs) / (epochs - warmup_epochs);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

LossGradient probe_loss_gradient(const Matrix& weights, const Vector& bias, const Matrix& x, const Matrix& targets,
                                 const Vector& areas, std::span<const Index> rows) {
  if (weights.cols() != x.cols() || targets.rows() != x.rows() || targets.cols() != weights.rows() ||
      areas.size() != x.rows() || bias.size() != weights.rows()) {
    throw ValidationError("probe training inputs have inconsistent shapes");
  }
  std::vector<Index> all;
  if (rows.empty()) {
    all.resize(static_cast<std::size_t>(x.rows()));
    std::iota(all.begin(), all.end(), Index{0});
    rows = all;
  }
  LossGradient out;
  out.weight_grad = Matrix::Zero(weights.rows(), weights.cols());
  out.bias_grad = Vector::Zero(weights.rows());
  double area_sum = 0.0;
  for (Index i : rows) {
    const double a = areas(i);
    const Vector z = weights * x.row(i).transpose() + bias;
    const double peak = z.maxCoeff();
    const double lse = peak + std::log((z.array() - peak).exp().sum());
    const Vector t = targets.row(i).transpose();
    const double mass = t.sum();
    out.loss += a * (lse * mass - t.dot(z));
    const Vector dz = a * ((z.array() - lse).exp().matrix() * mass - t);
    out.weight_grad.noalias() += dz * x.row(i);
    out.bias_grad += dz;
    area_sum += a;
  }
  if (!(area_sum > 0.0)) throw ValidationError("probe batch has zero total area");
  out.loss /= area_sum;
  out.weight_grad /= area_sum;
  out.bias_grad /= area_sum;
  return out;
}

ProbeModel train_probe(const Matrix& x, const Matrix& targets, const Vector& areas, const ProbeHyper& hyper) {
  hyper.validate();
  const Index n = x.rows();
  if (n == 0) throw ValidationError("cannot train a probe on zero samples");
  check_finite(x, "probe inputs");
  check_simplex_rows(targets, 1e-6, false);
  if ((areas.array() <= 0.0).any()) throw ValidationError("mask areas must be positive");

  const Index k = targets.cols();
  ProbeModel model;
  model.weights = Matrix::Zero(k, x.cols());
  model.bias = Vector::Zero(k);
  Matrix velocity_w = Matrix::Zero(k, x.cols());
  Vector velocity_b = Vector::Zero(k);

  const int batch = hyper.effective_batch(n);
  const Index steps = (n + batch - 1) / batch;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(hyper.seed);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.shuffle) {
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
      }
    }
    double epoch_loss = 0.0;
    double epoch_area = 0.0;
    for (Index s = 0; s < steps; ++s) {
      const Index begin = s * batch;
      const Index end = std::min(n, begin + batch);
      const std::span<const Index> rows(order.data() + begin, static_cast<std::size_t>(end - begin));
      LossGradient lg = probe_loss_gradient(model.weights, model.bias, x, targets, areas, rows);
      if (!std::isfinite(lg.loss) || !lg.weight_grad.allFinite()) {
        throw NumericalError("probe loss became non-finite at epoch " + std::to_string(epoch));
      }
      double batch_area = 0.0;
      for (Index i : rows) batch_area += areas(i);
      epoch_loss += lg.loss * batch_area;
      epoch_area += batch_area;

      const double lr = hyper.learning_rate(epoch + static_cast<double>(s) / steps, n);
      lg.weight_grad += hyper.weight_decay * model.weights;
      velocity_w = hyper.momentum * velocity_w + lg.weight_grad;
      model.weights -= lr * velocity_w;
      if (hyper.use_bias) {
        velocity_b = hyper.momentum * velocity_b + lg.bias_grad;
        model.bias -= lr * velocity_b;
      }
    }
    model.training_log.push_back(epoch_loss / epoch_area);
  }
  if (!model.weights.allFinite()) throw NumericalError("probe weights diverged");
  return model;
}

Matrix probe_scores(const ProbeModel& model, const Matrix& embeddings) {
  if (embeddings.cols() != model.weights.cols()) {
    throw ValidationError("embedding dimension " + std::to_string(embeddings.cols()) + " differs from probe input " +
                          std::to_string(model.weights.cols()));
  }
  Matrix logits = embeddings * model.weights.transpose();
  if (model.bias.size() == logits.cols()) logits.rowwise() += model.bias.transpose();
  return logits;
}

}  // namespace maskcls
