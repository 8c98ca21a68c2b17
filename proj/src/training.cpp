#include "magicvo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "magicvo/errors.hpp"
#include "magicvo/ops.hpp"

namespace magicvo::train {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite value >= 0");
  }
  if (!(rotation_weight >= 0)) throw ConfigError("rotation_weight must be >= 0");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be > 0");
  if (sequence_length == 0) throw ConfigError("sequence_length must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

namespace {

void check_pair(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 6 || pred.shape() != target.shape()) {
    throw ShapeError("pose_loss: expected matching [T, 6] tensors, got " + shape_str(pred.shape()) +
                     " and " + shape_str(target.shape()));
  }
}

}  // namespace

LossParts pose_loss_parts(const Tensor& pred, const Tensor& target, double w) {
  check_pair(pred, target);
  const std::size_t t = pred.dim(0);
  std::vector<double> weights(t * 6);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t k = 0; k < 6; ++k) weights[i * 6 + k] = k < 3 ? 1.0 : w;
  }
  const Tensor sq = ops::square(ops::sub(pred, target));
  LossParts parts;
  parts.total = ops::scalar_mul(ops::sum(ops::mul(sq, Tensor::from({t, 6}, std::move(weights)))),
                                1.0 / static_cast<double>(t));
  const auto v = sq.data();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t k = 0; k < 6; ++k) (k < 3 ? parts.translation : parts.rotation) += v[i * 6 + k];
  }
  parts.translation /= static_cast<double>(t);
  parts.rotation *= w / static_cast<double>(t);
  return parts;
}

Tensor pose_loss(const Tensor& pred, const Tensor& target, double w) {
  return pose_loss_parts(pred, target, w).total;
}

double global_grad_norm(const std::vector<NamedTensor>& params) {
  double ss = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_gradients(const std::vector<NamedTensor>& params, double clip_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > clip_norm)) return 1.0;
  const double factor = clip_norm / norm;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    Tensor t = p.tensor;
    for (double& g : t.mutable_grad()) g *= factor;
  }
  return factor;
}

void adagrad_step(const std::vector<NamedTensor>& params, OptimizerState& state, double lr) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto& acc = state.accumulators[p.name];
    if (acc.empty()) acc.assign(t.numel(), 0.0);
    if (acc.size() != t.numel()) {
      throw ShapeError("adagrad: accumulator for " + p.name + " has " + std::to_string(acc.size()) +
                       " entries, parameter has " + std::to_string(t.numel()));
    }
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto v = t.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (g[i] == 0.0) continue;
      acc[i] += g[i] * g[i];
      v[i] -= lr * g[i] / (std::sqrt(acc[i]) + state.epsilon);
    }
  }
  ++state.steps;
}

namespace {

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> m(rows * cols);
  for (double& x : m) x = u(rng) < rate ? 0.0 : keep_scale;
  return Tensor::from({rows, cols}, std::move(m));
}

}  // namespace

TrainResult train(const net::ModelParams& initial, const data::SampleSource& samples,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (samples.size() == 0) throw ContractError("train: dataset is empty");

  TrainResult result{initial.clone(), options.resume.value_or(OptimizerState{}), {}};
  net::ModelParams& params = result.params;
  params.set_requires_grad(true);
  const auto named = params.named();

  const std::size_t length = samples.sample(0).targets.dim(0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog row;
    row.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t first = 0, batch = 0; first < order.size(); first += cfg.batch_size, ++batch) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - first);
      params.zero_grad();
      Tensor total;
      double trans = 0.0, rot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const data::SequenceSample s = samples.sample(order[first + j]);
        if (s.targets.dim(0) != length) {
          throw ContractError("train: sample " + s.source_id + " has " +
                              std::to_string(s.targets.dim(0)) + " pairs, expected " +
                              std::to_string(length));
        }
        std::optional<Tensor> mask;
        if (cfg.dropout_rate > 0) {
          mask = dropout_mask(length, params.config.bilstm_output_size(), cfg.dropout_rate, rng);
        }
        const Tensor pred = net::model_forward(s.stack.tensor, params, mask);
        const LossParts parts = pose_loss_parts(pred, s.targets, cfg.rotation_weight);
        total = total.defined() ? ops::add(total, parts.total) : parts.total;
        trans += parts.translation;
        rot += parts.rotation;
      }
      total = ops::scalar_mul(total, 1.0 / static_cast<double>(n));
      const double loss = total.item();
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + " (optimizer step " +
                           std::to_string(result.optimizer.steps + 1) + ")");
      }
      total.backward();
      row.grad_norm_pre_clip += global_grad_norm(named);
      clip_gradients(named, cfg.clip_norm);
      adagrad_step(named, result.optimizer, cfg.learning_rate);

      row.mean_loss += loss;
      row.translation += trans / static_cast<double>(n);
      row.rotation += rot / static_cast<double>(n);
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    row.mean_loss /= nb;
    row.translation /= nb;
    row.rotation /= nb;
    row.grad_norm_pre_clip /= nb;
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (options.on_epoch) options.on_epoch(row, params);
  }
  params.zero_grad();
  return result;
}

double evaluate_loss(const net::ModelParams& params, const data::SampleSource& samples, double w) {
  if (samples.size() == 0) throw ContractError("evaluate_loss: dataset is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = samples.sample(i);
    total += pose_loss(net::model_forward(s.stack.tensor, params), s.targets, w).item();
  }
  return total / static_cast<double>(samples.size());
}

std::string epoch_log_csv_header() {
  return "epoch,mean_loss,translation_component,rotation_component,grad_norm_pre_clip,wall_time_s";
}

std::string epoch_log_csv_row(const EpochLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.6f", r.epoch, r.mean_loss,
                r.translation, r.rotation, r.grad_norm_pre_clip, r.wall_time_s);
  return buf;
}

Inference infer(const net::ModelParams& params, const data::FramePairStack& stack,
                std::size_t window) {
  const Tensor& x = stack.tensor;
  if (!x.defined() || x.rank() != 4 || x.dim(0) == 0) {
    throw ContractError("infer: need a [T, 6, H, W] stack with at least one pair (two frames)");
  }
  const std::size_t pairs = x.dim(0);
  const std::size_t chunk = window == 0 ? pairs : window;
  Inference out;
  for (std::size_t begin = 0; begin < pairs; begin += chunk) {
    const std::size_t end = std::min(pairs, begin + chunk);
    const Tensor part = (begin == 0 && end == pairs) ? x : ops::slice_time(x, begin, end).detach();
    const auto rel = data::targets_to_poses(net::model_forward(part, params));
    out.relatives.insert(out.relatives.end(), rel.begin(), rel.end());
  }
  out.trajectory = geometry::compose_trajectory(out.relatives);
  return out;
}

Inference infer_frames(const net::ModelParams& params, const std::vector<Image>& frames,
                       const data::NormalizationStats& stats, std::size_t window) {
  if (frames.size() < 2) {
    throw ContractError("infer: need at least 2 frames, got " + std::to_string(frames.size()));
  }
  const data::TargetSize target{params.config.input_height, params.config.input_width};
  return infer(params, data::preprocess(frames, stats, target), window);
}

}  // namespace magicvo::train
