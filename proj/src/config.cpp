#include "magicvo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "magicvo/errors.hpp"

namespace magicvo::config {

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys{
      {"seed", "0", "seed for initialization, shuffling, dropout and synthesis"},
      {"out", "out", "output directory"},
      {"data.dir", "", "dataset root (sequences/<id>/image_2, poses/<id>.txt)"},
      {"data.sequences", "", "comma-separated sequence ids; empty means all"},
      {"data.scale", "std", "normalization divisor: std or variance"},
      {"model.preset", "tiny", "tiny (48x160, 5 conv layers, hidden 32) or full (192x640, all layers, hidden 1000)"},
      {"model.input_height", "", "override the preset input height"},
      {"model.input_width", "", "override the preset input width"},
      {"model.hidden_size", "", "override the Bi-LSTM hidden size per direction"},
      {"model.head_width", "", "override the first fully connected layer width"},
      {"model.conv_layers", "", "keep the first N encoder layers"},
      {"model.conv_channels", "", "comma-separated output channels per kept encoder layer"},
      {"train.learning_rate", "0.001", "Adagrad learning rate"},
      {"train.rotation_weight", "100", "weight w of the Euler-angle term in the loss"},
      {"train.dropout", "0.5", "dropout rate on the Bi-LSTM output"},
      {"train.clip_norm", "5", "global gradient norm threshold"},
      {"train.sequence_length", "8", "frame pairs per training window"},
      {"train.batch_size", "4", "windows per optimizer step"},
      {"train.epochs", "10", "passes over the training windows"},
      {"train.resume", "", "checkpoint to continue from"},
      {"infer.checkpoint", "", "checkpoint file"},
      {"infer.images", "", "directory of frame PNGs (alternative to data.dir + infer.sequence)"},
      {"infer.sequence", "", "sequence id under data.dir"},
      {"infer.window", "", "pairs per inference chunk; 0 runs the whole sequence at once; empty uses the checkpoint's training window"},
      {"eval.pred", "", "predicted KITTI pose file"},
      {"eval.truth", "", "ground-truth KITTI pose file"},
      {"eval.lengths", "5,10,20,40", "segment lengths in meters"},
      {"synth.path", "line", "line, arc, figure-eight or mixed"},
      {"synth.count", "1", "number of sequences"},
      {"synth.frames", "41", "frames per sequence"},
      {"synth.height", "48", "image height"},
      {"synth.width", "160", "image width"},
      {"synth.speed", "0.5", "meters per frame"},
      {"synth.yaw_rate", "0.05", "radians per frame on arc paths"},
      {"synth.speed_variation", "0", "relative amplitude of the periodic speed change, in [0, 1)"},
      {"synth.speed_period", "20", "period of the speed change in frames"},
      {"synth.speed_phase", "0", "phase of the speed change in radians"},
      {"synth.figure_eight_size", "12", "figure-eight lobe half-length in meters"},
      {"synth.camera_height", "1.2", "camera height above the ground in meters"},
      {"synth.landmarks", "60", "number of landmark squares"},
      {"synth.supersample", "2", "samples per pixel along each axis"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.key] = k.default_value;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
  explicit_.insert(key);
}

void RunConfig::parse_text(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    if (!values_.count(key)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    set(key, trim(std::string_view(content).substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  parse_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (s.empty() || pos != s.size()) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (s.empty() || pos != s.size() || s[0] == '-') {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_strings(key)) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != s.size()) throw ConfigError(key + ": expected numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& k : known_keys()) out += k.key + " = " + values_.at(k.key) + "\n";
  return out;
}

net::ModelConfig model_config(const RunConfig& cfg) {
  const std::string& preset = cfg.get("model.preset");
  net::ModelConfig m;
  if (preset == "tiny") {
    m = net::ModelConfig::tiny();
  } else if (preset != "full") {
    throw ConfigError("model.preset: expected tiny or full, got '" + preset + "'");
  }
  auto size_or = [&](const char* key, std::size_t fallback) {
    return cfg.get(key).empty() ? fallback : cfg.get_size(key);
  };
  m.input_height = size_or("model.input_height", m.input_height);
  m.input_width = size_or("model.input_width", m.input_width);
  m.hidden_size = size_or("model.hidden_size", m.hidden_size);
  m.head_width = size_or("model.head_width", m.head_width);
  if (!cfg.get("model.conv_layers").empty() || !cfg.get("model.conv_channels").empty()) {
    const auto channels = cfg.get_doubles("model.conv_channels");
    const std::size_t count = size_or("model.conv_layers", channels.empty() ? m.conv.layers.size() : channels.size());
    std::vector<std::size_t> ch;
    for (double c : channels) {
      if (!(c >= 1) || c != static_cast<double>(static_cast<std::size_t>(c))) {
        throw ConfigError("model.conv_channels: channel counts must be positive integers");
      }
      ch.push_back(static_cast<std::size_t>(c));
    }
    m.conv = net::ConvStackConfig::table1().truncated(count, ch);
  }
  m.validate();
  return m;
}

bool model_overridden(const RunConfig& cfg) {
  for (const auto& k : known_keys()) {
    if (k.key.rfind("model.", 0) == 0 && cfg.is_set(k.key)) return true;
  }
  return false;
}

train::TrainConfig train_config(const RunConfig& cfg) {
  train::TrainConfig t;
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.rotation_weight = cfg.get_double("train.rotation_weight");
  t.dropout_rate = cfg.get_double("train.dropout");
  t.clip_norm = cfg.get_double("train.clip_norm");
  t.sequence_length = cfg.get_size("train.sequence_length");
  t.batch_size = cfg.get_size("train.batch_size");
  t.epochs = cfg.get_size("train.epochs");
  t.seed = cfg.get_u64("seed");
  t.validate();
  return t;
}

data::ScaleMode scale_mode(const RunConfig& cfg) {
  const std::string& s = cfg.get("data.scale");
  if (s == "std") return data::ScaleMode::StdDev;
  if (s == "variance") return data::ScaleMode::Variance;
  throw ConfigError("data.scale: expected std or variance, got '" + s + "'");
}

std::vector<synth::SynthSpec> synth_specs(const RunConfig& cfg) {
  const std::size_t count = cfg.get_size("synth.count");
  if (count == 0) throw ConfigError("synth.count must be >= 1");
  const std::size_t frames = cfg.get_size("synth.frames");
  const std::size_t height = cfg.get_size("synth.height"), width = cfg.get_size("synth.width");
  const std::uint64_t seed = cfg.get_u64("seed");

  std::vector<synth::SynthSpec> specs;
  const std::string& path = cfg.get("synth.path");
  if (path == "mixed") {
    specs = synth::mixed_specs(count, frames, seed, height, width);
  } else {
    synth::SynthSpec s;
    s.path = synth::parse_path_type(path);
    s.frame_count = frames;
    s.height = height;
    s.width = width;
    s.speed = cfg.get_double("synth.speed");
    s.yaw_rate = cfg.get_double("synth.yaw_rate");
    s.speed_variation = cfg.get_double("synth.speed_variation");
    s.speed_period = cfg.get_double("synth.speed_period");
    s.speed_phase = cfg.get_double("synth.speed_phase");
    s.figure_eight_size = cfg.get_double("synth.figure_eight_size");
    for (std::size_t i = 0; i < count; ++i) {
      s.seed = seed + i;
      specs.push_back(s);
    }
  }
  for (auto& s : specs) {
    s.camera_height = cfg.get_double("synth.camera_height");
    s.landmarks = cfg.get_size("synth.landmarks");
    s.supersample = cfg.get_size("synth.supersample");
    s.validate();
  }
  return specs;
}

}  // namespace magicvo::config
