#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "magicvo/data.hpp"
#include "magicvo/geometry.hpp"
#include "magicvo/network.hpp"

namespace magicvo::train {

struct TrainConfig {
  double learning_rate = 0.001;
  double rotation_weight = 100.0;  // w
  double dropout_rate = 0.5;       // on the Bi-LSTM output sequence
  double clip_norm = 5.0;          // global, over every parameter
  std::size_t sequence_length = 8; // pairs per training window
  std::size_t batch_size = 4;      // N
  std::size_t epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adagrad accumulators keyed by parameter name.
struct OptimizerState {
  std::map<std::string, std::vector<double>> accumulators;
  double epsilon = 1e-10;
  std::size_t steps = 0;
};

struct LossParts {
  Tensor total;              // differentiable scalar
  double translation = 0.0;  // unweighted translation part of total
  double rotation = 0.0;     // w-weighted rotation part of total
};

/// Mean over timesteps of |dt|^2 + w |d_euler|^2 for [T, 6] rows.
Tensor pose_loss(const Tensor& pred, const Tensor& target, double w);
LossParts pose_loss_parts(const Tensor& pred, const Tensor& target, double w);

double global_grad_norm(const std::vector<NamedTensor>& params);
/// Rescales every gradient by clip_norm / g when the global norm g exceeds
/// clip_norm. Returns the factor applied (1 when unchanged).
double clip_gradients(const std::vector<NamedTensor>& params, double clip_norm);
inline double clip_gradients(const net::ModelParams& params, double clip_norm) {
  return clip_gradients(params.named(), clip_norm);
}

/// acc += g^2; p -= lr * g / (sqrt(acc) + eps). Parameters without a gradient
/// are treated as having a zero gradient.
void adagrad_step(const std::vector<NamedTensor>& params, OptimizerState& state, double lr);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double translation = 0.0;
  double rotation = 0.0;
  double grad_norm_pre_clip = 0.0;  // mean over the epoch's steps
  double wall_time_s = 0.0;
};

struct TrainOptions {
  std::optional<OptimizerState> resume;
  std::function<void(const EpochLog&, const net::ModelParams&)> on_epoch;
};

struct TrainResult {
  net::ModelParams params;
  OptimizerState optimizer;
  std::vector<EpochLog> log;
};

/// Epoch loop: seeded shuffle, batches of cfg.batch_size windows, fresh
/// dropout masks per sample, loss, backward, clipping, Adagrad. The initial
/// parameters are copied, not modified. Throws NumericError on a non-finite
/// loss, naming the epoch, batch and step.
TrainResult train(const net::ModelParams& initial, const data::SampleSource& samples,
                  const TrainConfig& cfg, const TrainOptions& options = {});

/// Loss of every sample with dropout disabled, averaged.
double evaluate_loss(const net::ModelParams& params, const data::SampleSource& samples, double w);

std::string epoch_log_csv_header();
std::string epoch_log_csv_row(const EpochLog& row);

struct Inference {
  std::vector<geometry::Pose6DoF> relatives;
  geometry::Trajectory trajectory;  // relatives.size() + 1 poses from the identity
};

/// Dropout disabled. `window` > 0 runs the network on consecutive chunks of
/// that many pairs instead of the whole sequence at once.
Inference infer(const net::ModelParams& params, const data::FramePairStack& stack,
                std::size_t window = 0);
Inference infer_frames(const net::ModelParams& params, const std::vector<Image>& frames,
                       const data::NormalizationStats& stats, std::size_t window = 0);

}  // namespace magicvo::train
