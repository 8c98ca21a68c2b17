#include "magicvo/network.hpp"

#include <cmath>
#include <random>

#include "magicvo/ops.hpp"

namespace magicvo::net {

ConvStackConfig ConvStackConfig::table1() {
  ConvStackConfig cfg;
  cfg.layers = {
      {"conv1", 7, 3, 2, 64},    {"conv2", 5, 2, 2, 128},   {"conv3", 5, 2, 2, 256},
      {"conv3_1", 3, 1, 1, 256}, {"conv4", 3, 1, 2, 512},   {"conv4_1", 3, 1, 1, 512},
      {"conv5", 3, 1, 2, 512},   {"conv5_1", 3, 1, 1, 512}, {"conv6", 3, 1, 2, 1024},
  };
  return cfg;
}

ConvStackConfig ConvStackConfig::truncated(std::size_t count,
                                           const std::vector<std::size_t>& channels) const {
  if (count == 0 || count > layers.size()) {
    throw ConfigError("conv stack: cannot keep " + std::to_string(count) + " of " +
                      std::to_string(layers.size()) + " layers");
  }
  if (!channels.empty() && channels.size() != count) {
    throw ConfigError("conv stack: " + std::to_string(channels.size()) +
                      " channel overrides for " + std::to_string(count) + " layers");
  }
  ConvStackConfig out = *this;
  out.layers.resize(count);
  for (std::size_t i = 0; i < channels.size(); ++i) out.layers[i].out_channels = channels[i];
  return out;
}

void ConvStackConfig::validate() const {
  if (layers.empty()) throw ConfigError("conv stack: no layers");
  if (input_channels == 0) throw ConfigError("conv stack: input_channels must be >= 1");
  for (const auto& l : layers) {
    if (l.kernel_size < 1 || l.stride < 1 || l.out_channels < 1) {
      throw ConfigError("conv stack: layer " + l.name +
                        " needs kernel_size, stride and out_channels >= 1");
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> ConvStackConfig::spatial_sizes(
    std::size_t height, std::size_t width) const {
  validate();
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  for (const auto& l : layers) {
    const std::size_t h = ops::conv_output_size(height, l.kernel_size, l.stride, l.padding);
    const std::size_t w = ops::conv_output_size(width, l.kernel_size, l.stride, l.padding);
    if (h < 1 || w < 1) {
      throw ConfigError("conv stack: layer " + l.name + " collapses a " +
                        std::to_string(height) + "x" + std::to_string(width) +
                        " input to nothing");
    }
    sizes.emplace_back(h, w);
    height = h;
    width = w;
  }
  return sizes;
}

std::size_t ConvStackConfig::output_channels() const { return layers.back().out_channels; }

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.conv = ConvStackConfig::table1().truncated(5, {8, 16, 16, 16, 32});
  cfg.input_height = 48;
  cfg.input_width = 160;
  cfg.hidden_size = 32;
  cfg.head_width = 64;
  return cfg;
}

void ModelConfig::validate() const {
  conv.validate();
  if (hidden_size == 0) throw ConfigError("model: hidden_size must be >= 1");
  if (head_width == 0) throw ConfigError("model: head_width must be >= 1");
  (void)feature_size();
}

std::size_t ModelConfig::feature_size() const {
  const auto [h, w] = conv.spatial_sizes(input_height, input_width).back();
  return h * w * conv.output_channels();
}

void LSTMCellParams::validate() const {
  const Shape& s = w_input.shape();
  if (s.size() != 2 || s[1] <= s[0]) {
    throw ShapeError("lstm: gate matrix must be [hidden, input + hidden], got " + shape_str(s));
  }
  for (const Tensor* w : {&w_forget, &w_cell, &w_output}) {
    if (w->shape() != s) {
      throw ShapeError("lstm: gate matrices disagree, " + shape_str(s) + " vs " +
                       shape_str(w->shape()));
    }
  }
  for (const Tensor* b : {&b_input, &b_forget, &b_cell, &b_output}) {
    if (b->shape() != Shape{s[0]}) {
      throw ShapeError("lstm: gate bias expected " + shape_str({s[0]}) + ", got " +
                       shape_str(b->shape()));
    }
  }
}

BiLSTMParams BiLSTMParams::swapped() const {
  return {backward, forward, v_backward, v_forward, out_bias};
}

namespace {

void append_cell(std::vector<NamedTensor>& out, const std::string& prefix,
                 const LSTMCellParams& c) {
  out.push_back({prefix + ".Wi", c.w_input});
  out.push_back({prefix + ".Wf", c.w_forget});
  out.push_back({prefix + ".Wg", c.w_cell});
  out.push_back({prefix + ".Wo", c.w_output});
  out.push_back({prefix + ".bi", c.b_input});
  out.push_back({prefix + ".bf", c.b_forget});
  out.push_back({prefix + ".bg", c.b_cell});
  out.push_back({prefix + ".bo", c.b_output});
}

LSTMCellParams clone_cell(const LSTMCellParams& c) {
  return {c.w_input.clone(),  c.w_forget.clone(), c.w_cell.clone(), c.w_output.clone(),
          c.b_input.clone(),  c.b_forget.clone(), c.b_cell.clone(), c.b_output.clone()};
}

}  // namespace

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string& name = config.conv.layers[i].name;
    out.push_back({name + ".weight", conv[i].weight});
    out.push_back({name + ".bias", conv[i].bias});
  }
  append_cell(out, "bilstm.fwd", bilstm.forward);
  append_cell(out, "bilstm.bwd", bilstm.backward);
  out.push_back({"bilstm.out.V_fwd", bilstm.v_forward});
  out.push_back({"bilstm.out.V_bwd", bilstm.v_backward});
  out.push_back({"bilstm.out.bias", bilstm.out_bias});
  out.push_back({"head.fc1.weight", head.fc1_weight});
  out.push_back({"head.fc1.bias", head.fc1_bias});
  out.push_back({"head.fc2.weight", head.fc2_weight});
  out.push_back({"head.fc2.bias", head.fc2_bias});
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named()) n += p.tensor.numel();
  return n;
}

void ModelParams::set_requires_grad(bool on) const {
  for (auto p : named()) p.tensor.set_requires_grad(on);
}

void ModelParams::zero_grad() const {
  for (auto p : named()) p.tensor.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.config = config;
  for (const auto& c : conv) out.conv.push_back({c.weight.clone(), c.bias.clone()});
  out.bilstm = {clone_cell(bilstm.forward), clone_cell(bilstm.backward),
                bilstm.v_forward.clone(), bilstm.v_backward.clone(), bilstm.out_bias.clone()};
  out.head = {head.fc1_weight.clone(), head.fc1_bias.clone(), head.fc2_weight.clone(),
              head.fc2_bias.clone()};
  return out;
}

namespace {

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng_);
    return Tensor::from(std::move(shape), std::move(v));
  }

  LSTMCellParams cell(std::size_t input, std::size_t hidden) {
    const Shape w{hidden, input + hidden};
    const std::size_t fan_in = input + hidden;
    LSTMCellParams c;
    c.w_input = uniform(w, fan_in);
    c.w_forget = uniform(w, fan_in);
    c.w_cell = uniform(w, fan_in);
    c.w_output = uniform(w, fan_in);
    c.b_input = Tensor::zeros({hidden});
    c.b_forget = Tensor::full({hidden}, 1.0);
    c.b_cell = Tensor::zeros({hidden});
    c.b_output = Tensor::zeros({hidden});
    return c;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamInit init(seed);
  ModelParams p;
  p.config = config;
  std::size_t in_ch = config.conv.input_channels;
  for (const auto& l : config.conv.layers) {
    const std::size_t fan_in = in_ch * l.kernel_size * l.kernel_size;
    p.conv.push_back({init.uniform({l.out_channels, in_ch, l.kernel_size, l.kernel_size}, fan_in),
                      Tensor::zeros({l.out_channels})});
    in_ch = l.out_channels;
  }
  const std::size_t feat = config.feature_size();
  const std::size_t hidden = config.hidden_size;
  const std::size_t out = config.bilstm_output_size();
  p.bilstm.forward = init.cell(feat, hidden);
  p.bilstm.backward = init.cell(feat, hidden);
  p.bilstm.v_forward = init.uniform({out, hidden}, 2 * hidden);
  p.bilstm.v_backward = init.uniform({out, hidden}, 2 * hidden);
  p.bilstm.out_bias = Tensor::zeros({out});
  p.head.fc1_weight = init.uniform({config.head_width, out}, out);
  p.head.fc1_bias = Tensor::zeros({config.head_width});
  p.head.fc2_weight = init.uniform({6, config.head_width}, config.head_width);
  p.head.fc2_bias = Tensor::zeros({6});
  return p;
}

Tensor conv_stack_forward(const Tensor& stacked_pairs, const ModelParams& params) {
  const auto& cfg = params.config.conv;
  if (stacked_pairs.rank() != 4 || stacked_pairs.dim(1) != cfg.input_channels) {
    throw ShapeError("conv encoder: expected [T, " + std::to_string(cfg.input_channels) +
                     ", H, W], got " + shape_str(stacked_pairs.shape()));
  }
  // Fails early with the offending layer's name.
  (void)cfg.spatial_sizes(stacked_pairs.dim(2), stacked_pairs.dim(3));
  Tensor x = stacked_pairs;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    x = ops::conv2d(x, params.conv[i].weight, params.conv[i].bias, {l.stride, l.padding});
    x = ops::leaky_relu(x, cfg.leaky_slope);
  }
  return x;
}

Tensor conv_encoder_forward(const Tensor& stacked_pairs, const ModelParams& params) {
  Tensor x = conv_stack_forward(stacked_pairs, params);
  const std::size_t t = x.dim(0);
  return ops::reshape(x, {t, x.numel() / t});
}

namespace {

Tensor linear(const Tensor& x, const Tensor& weight_t, const Tensor& bias) {
  return ops::add_bias(ops::matmul(x, weight_t), bias);
}

// Gate matrices transposed and fused into [input + hidden, 4 * hidden] so a
// step is one matmul.
struct PreparedCell {
  Tensor weight_t;
  Tensor bias;
  std::size_t hidden;

  explicit PreparedCell(const LSTMCellParams& p) : hidden(p.hidden_size()) {
    p.validate();
    weight_t = ops::concat({ops::transpose(p.w_input), ops::transpose(p.w_forget),
                            ops::transpose(p.w_cell), ops::transpose(p.w_output)},
                           1);
    bias = ops::concat({p.b_input, p.b_forget, p.b_cell, p.b_output}, 0);
  }

  LSTMState step(const Tensor& x_t, const LSTMState& state) const {
    const Tensor z = linear(ops::concat_channels({x_t, state.hidden}), weight_t, bias);
    const Tensor i = ops::sigmoid(ops::slice_cols(z, 0, hidden));
    const Tensor f = ops::sigmoid(ops::slice_cols(z, hidden, 2 * hidden));
    const Tensor g = ops::tanh(ops::slice_cols(z, 2 * hidden, 3 * hidden));
    const Tensor o = ops::sigmoid(ops::slice_cols(z, 3 * hidden, 4 * hidden));
    const Tensor c = ops::add(ops::mul(f, state.cell), ops::mul(i, g));
    return {ops::mul(o, ops::tanh(c)), c};
  }
};

void check_step_shapes(const char* what, const Tensor& x_t, const LSTMState& state,
                       std::size_t input, std::size_t hidden) {
  const std::size_t rows = x_t.rank() == 2 ? x_t.dim(0) : 0;
  if (x_t.rank() != 2 || x_t.dim(1) != input) {
    throw ShapeError(std::string(what) + ": input expected [N, " + std::to_string(input) +
                     "], got " + shape_str(x_t.shape()));
  }
  const Shape expected{rows, hidden};
  if (state.hidden.shape() != expected || state.cell.shape() != expected) {
    throw ShapeError(std::string(what) + ": state expected " + shape_str(expected) +
                     ", got " + shape_str(state.hidden.shape()) + " / " +
                     shape_str(state.cell.shape()));
  }
}

}  // namespace

RnnStep rnn_reference_step(const Tensor& x_t, const Tensor& h_prev, const Tensor& w_hh,
                           const Tensor& w_xh, const Tensor& b_h, const Tensor& w_yh,
                           const Tensor& b_y) {
  const Tensor pre = ops::add(ops::matmul(h_prev, ops::transpose(w_hh)),
                              ops::matmul(x_t, ops::transpose(w_xh)));
  const Tensor h = ops::tanh(ops::add_bias(pre, b_h));
  return {h, linear(h, ops::transpose(w_yh), b_y)};
}

LSTMState lstm_cell_step(const Tensor& x_t, const LSTMState& state,
                         const LSTMCellParams& params) {
  params.validate();
  check_step_shapes("lstm_cell_step", x_t, state, params.input_size(), params.hidden_size());
  return PreparedCell(params).step(x_t, state);
}

BiLSTMOutput bilstm_forward(const Tensor& features, const BiLSTMParams& params) {
  if (features.rank() != 2) {
    throw ShapeError("bilstm: features expected [T, F], got " + shape_str(features.shape()));
  }
  const std::size_t steps = features.dim(0);
  if (steps == 0) throw ContractError("bilstm: empty sequence");
  const PreparedCell fwd(params.forward);
  const PreparedCell bwd(params.backward);
  if (fwd.hidden != bwd.hidden) {
    throw ShapeError("bilstm: forward hidden " + std::to_string(fwd.hidden) +
                     " != backward hidden " + std::to_string(bwd.hidden));
  }
  const std::size_t hidden = fwd.hidden;
  const LSTMState zero{Tensor::zeros({1, hidden}), Tensor::zeros({1, hidden})};
  check_step_shapes("bilstm", ops::slice_time(features, 0, 1), zero,
                    params.forward.input_size(), hidden);
  check_step_shapes("bilstm", ops::slice_time(features, 0, 1), zero,
                    params.backward.input_size(), hidden);

  std::vector<Tensor> rows;
  rows.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) rows.push_back(ops::slice_time(features, t, t + 1));

  std::vector<Tensor> fwd_h(steps), bwd_h(steps);
  LSTMState s = zero;
  for (std::size_t t = 0; t < steps; ++t) {
    s = fwd.step(rows[t], s);
    fwd_h[t] = s.hidden;
  }
  s = zero;
  for (std::size_t t = steps; t-- > 0;) {
    s = bwd.step(rows[t], s);
    bwd_h[t] = s.hidden;
  }

  BiLSTMOutput out;
  out.forward_hidden = ops::concat(fwd_h, 0);
  out.backward_hidden = ops::concat(bwd_h, 0);
  out.concatenated = ops::concat_channels({out.forward_hidden, out.backward_hidden});
  out.combined = ops::add_bias(
      ops::add(ops::matmul(out.forward_hidden, ops::transpose(params.v_forward)),
               ops::matmul(out.backward_hidden, ops::transpose(params.v_backward))),
      params.out_bias);
  return out;
}

Tensor model_forward(const Tensor& stacked_pairs, const ModelParams& params,
                     const std::optional<Tensor>& dropout_mask) {
  const Tensor features = conv_encoder_forward(stacked_pairs, params);
  if (features.dim(1) != params.bilstm.forward.input_size()) {
    throw ShapeError("model: encoder emits " + std::to_string(features.dim(1)) +
                     " features per step but the Bi-LSTM expects " +
                     std::to_string(params.bilstm.forward.input_size()) + " (input " +
                     shape_str(stacked_pairs.shape()) + ")");
  }
  Tensor y = bilstm_forward(features, params.bilstm).combined;
  if (dropout_mask) y = ops::dropout_mask_apply(y, *dropout_mask);
  const auto& h = params.head;
  const Tensor fc1 = ops::leaky_relu(linear(y, ops::transpose(h.fc1_weight), h.fc1_bias),
                                     params.config.head_slope);
  return linear(fc1, ops::transpose(h.fc2_weight), h.fc2_bias);
}

}  // namespace magicvo::net
