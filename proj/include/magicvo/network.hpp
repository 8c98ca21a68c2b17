#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "magicvo/gradcheck.hpp"
#include "magicvo/tensor.hpp"

namespace magicvo::net {

struct ConvLayerSpec {
  std::string name;
  std::size_t kernel_size = 3;
  std::size_t padding = 1;
  std::size_t stride = 1;
  std::size_t out_channels = 1;
};

/// The FlowNet-style encoder: conv layers each followed by a leaky rectifier.
struct ConvStackConfig {
  std::vector<ConvLayerSpec> layers;
  std::size_t input_channels = 6;
  double leaky_slope = 0.1;

  /// Nine layers, conv1 .. conv6, exactly as the reference encoder table.
  static ConvStackConfig table1();
  /// First `count` layers of *this, optionally overriding their channel counts.
  ConvStackConfig truncated(std::size_t count,
                            const std::vector<std::size_t>& channels = {}) const;

  void validate() const;
  /// Output (height, width) after each layer. Throws ConfigError naming the
  /// first layer whose output would be empty.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_sizes(std::size_t height,
                                                                 std::size_t width) const;
  std::size_t output_channels() const;
};

struct ModelConfig {
  ConvStackConfig conv = ConvStackConfig::table1();
  std::size_t input_height = 192;
  std::size_t input_width = 640;
  std::size_t hidden_size = 1000;  // per direction
  std::size_t head_width = 256;
  double head_slope = 0.1;

  /// Desk-scale reference: 48x160 input, first five encoder layers with
  /// reduced widths, hidden 32, head 64.
  static ModelConfig tiny();

  void validate() const;
  /// Flattened encoder output per timestep (Bi-LSTM input size).
  std::size_t feature_size() const;
  /// Width of the combined Bi-LSTM output y_t.
  std::size_t bilstm_output_size() const { return 2 * hidden_size; }
};

struct ConvLayerParams {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
};

/// Gate matrices are [hidden, input + hidden] over the stacked [x_t ; h_{t-1}].
struct LSTMCellParams {
  Tensor w_input, w_forget, w_cell, w_output;
  Tensor b_input, b_forget, b_cell, b_output;

  std::size_t hidden_size() const { return w_input.dim(0); }
  std::size_t input_size() const { return w_input.dim(1) - w_input.dim(0); }
  void validate() const;
};

/// Two directions plus the linear combination y_t = V A_t + V' A'_t + b.
struct BiLSTMParams {
  LSTMCellParams forward;
  LSTMCellParams backward;
  Tensor v_forward;   // [out, hidden]
  Tensor v_backward;  // [out, hidden]
  Tensor out_bias;    // [out]

  /// Same weights with the two directions exchanged (V and V' included).
  BiLSTMParams swapped() const;
};

struct RegressionHeadParams {
  Tensor fc1_weight;  // [head_width, 2*hidden]
  Tensor fc1_bias;
  Tensor fc2_weight;  // [6, head_width]
  Tensor fc2_bias;
};

struct ModelParams {
  ModelConfig config;
  std::vector<ConvLayerParams> conv;
  BiLSTMParams bilstm;
  RegressionHeadParams head;

  /// Every parameter with its stable checkpoint name, in a fixed order:
  /// <layer>.weight/.bias for the encoder, bilstm.{fwd,bwd}.{Wi,Wf,Wg,Wo,bi,bf,bg,bo},
  /// bilstm.out.{V_fwd,V_bwd,bias}, head.fc{1,2}.{weight,bias}.
  std::vector<NamedTensor> named() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;
  /// Deep copy with fresh leaves.
  ModelParams clone() const;
};

/// Uniform in +-sqrt(1/fan_in) per weight, forget-gate biases 1, other biases 0.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// [T, C, H, W] -> [T, C', H', W'] through every encoder layer.
Tensor conv_stack_forward(const Tensor& stacked_pairs, const ModelParams& params);
/// [T, 6, H, W] -> [T, F] (row-major flatten of the final activation).
Tensor conv_encoder_forward(const Tensor& stacked_pairs, const ModelParams& params);

struct RnnStep {
  Tensor hidden;
  Tensor output;
};

/// Plain tanh recurrence, kept as a reference cell:
/// h_t = tanh(W_hh h_{t-1} + W_xh x_t + b_h), y_t = W_yh h_t + b_y.
/// Vectors are row tensors [1, n]; matrices are [out, in].
RnnStep rnn_reference_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& w_hh,
                           const Tensor& w_xh, const Tensor& b_h, const Tensor& w_yh,
                           const Tensor& b_y);

struct LSTMState {
  Tensor hidden;  // [N, hidden]
  Tensor cell;    // [N, hidden]
};

/// One gated step on a batch of rows x_t: [N, input].
LSTMState lstm_cell_step(const Tensor& x_t, const LSTMState& state,
                         const LSTMCellParams& params);

struct BiLSTMOutput {
  Tensor forward_hidden;   // [T, hidden], A_t
  Tensor backward_hidden;  // [T, hidden], A'_t
  Tensor concatenated;     // [T, 2*hidden]
  Tensor combined;         // [T, out], y_t
};

BiLSTMOutput bilstm_forward(const Tensor& features, const BiLSTMParams& params);

/// Full pipeline. Returns [T, 6] rows (tx, ty, tz, roll, pitch, yaw), each the
/// motion from frame i to frame i+1. `dropout_mask`, when given, has the shape
/// of the Bi-LSTM output [T, 2*hidden].
Tensor model_forward(const Tensor& stacked_pairs, const ModelParams& params,
                     const std::optional<Tensor>& dropout_mask = std::nullopt);

}  // namespace magicvo::net
