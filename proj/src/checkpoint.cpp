#include "magicvo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "magicvo/errors.hpp"

namespace magicvo::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'V', 'O', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void entry(const std::string& name, const Shape& shape, std::span<const double> values) {
    str(name);
    pod(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) pod(static_cast<std::uint64_t>(d));
    bytes_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) fail("truncated tensor data");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("checkpoint " + source_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) fail("unexpected end of file");
  }
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_metadata(const std::string& text, const Reader& r) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("metadata line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::string get(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw ParseError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::size_t to_size(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw ParseError("checkpoint metadata '" + key + "' is not an integer: " + s);
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw ParseError("checkpoint metadata '" + key + "' is not a number: " + s);
  return v;
}

}  // namespace

std::map<std::string, std::string> model_config_to_map(const net::ModelConfig& c) {
  std::map<std::string, std::string> m;
  m["model.input_height"] = std::to_string(c.input_height);
  m["model.input_width"] = std::to_string(c.input_width);
  m["model.hidden_size"] = std::to_string(c.hidden_size);
  m["model.head_width"] = std::to_string(c.head_width);
  m["model.head_slope"] = num(c.head_slope);
  m["model.conv.input_channels"] = std::to_string(c.conv.input_channels);
  m["model.conv.leaky_slope"] = num(c.conv.leaky_slope);
  m["model.conv.layers"] = std::to_string(c.conv.layers.size());
  for (std::size_t i = 0; i < c.conv.layers.size(); ++i) {
    const auto& l = c.conv.layers[i];
    m["model.conv." + std::to_string(i)] = l.name + ":" + std::to_string(l.kernel_size) + ":" +
                                           std::to_string(l.padding) + ":" + std::to_string(l.stride) +
                                           ":" + std::to_string(l.out_channels);
  }
  return m;
}

net::ModelConfig model_config_from_map(const std::map<std::string, std::string>& m) {
  net::ModelConfig c;
  c.input_height = to_size(get(m, "model.input_height"), "model.input_height");
  c.input_width = to_size(get(m, "model.input_width"), "model.input_width");
  c.hidden_size = to_size(get(m, "model.hidden_size"), "model.hidden_size");
  c.head_width = to_size(get(m, "model.head_width"), "model.head_width");
  c.head_slope = to_double(get(m, "model.head_slope"), "model.head_slope");
  c.conv.input_channels = to_size(get(m, "model.conv.input_channels"), "model.conv.input_channels");
  c.conv.leaky_slope = to_double(get(m, "model.conv.leaky_slope"), "model.conv.leaky_slope");
  const std::size_t layers = to_size(get(m, "model.conv.layers"), "model.conv.layers");
  c.conv.layers.clear();
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string key = "model.conv." + std::to_string(i);
    std::vector<std::string> parts;
    std::stringstream ss(get(m, key));
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 5) throw ParseError("checkpoint metadata '" + key + "' is malformed");
    c.conv.layers.push_back({parts[0], to_size(parts[1], key), to_size(parts[2], key),
                             to_size(parts[3], key), to_size(parts[4], key)});
  }
  c.validate();
  return c;
}

void require_same_config(const net::ModelConfig& checkpoint, const net::ModelConfig& requested) {
  const auto a = model_config_to_map(checkpoint);
  const auto b = model_config_to_map(requested);
  std::string diff;
  std::set<std::string> keys;
  for (const auto& [k, v] : a) keys.insert(k);
  for (const auto& [k, v] : b) keys.insert(k);
  for (const auto& k : keys) {
    const auto ia = a.find(k), ib = b.find(k);
    const std::string va = ia == a.end() ? "(absent)" : ia->second;
    const std::string vb = ib == b.end() ? "(absent)" : ib->second;
    if (va != vb) diff += "\n  " + k + ": checkpoint " + va + ", requested " + vb;
  }
  if (!diff.empty()) throw ConfigError("model configuration does not match the checkpoint:" + diff);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  auto meta = model_config_to_map(ck.params.config);
  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("model.", 0) == 0 || k.rfind("adagrad.", 0) == 0) {
      throw ContractError("checkpoint metadata key '" + k + "' uses a reserved prefix");
    }
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint metadata '" + k + "' contains '=' or a newline");
    }
    meta[k] = v;
  }
  if (ck.optimizer) {
    meta["adagrad.epsilon"] = num(ck.optimizer->epsilon);
    meta["adagrad.steps"] = std::to_string(ck.optimizer->steps);
  }
  std::string meta_text;
  for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";

  const auto named = ck.params.named();
  Writer w;
  w.pod(kMagic);
  w.pod(kVersion);
  w.str(meta_text);
  std::uint32_t count = static_cast<std::uint32_t>(named.size() + 2);
  if (ck.optimizer) count += static_cast<std::uint32_t>(named.size());
  w.pod(count);
  for (const auto& p : named) w.entry(p.name, p.tensor.shape(), p.tensor.data());
  w.entry("norm.mean", {3}, ck.stats.mean);
  w.entry("norm.scale", {3}, ck.stats.scale);
  if (ck.optimizer) {
    for (const auto& p : named) {
      const auto it = ck.optimizer->accumulators.find(p.name);
      std::vector<double> acc = it == ck.optimizer->accumulators.end()
                                    ? std::vector<double>(p.tensor.numel(), 0.0)
                                    : it->second;
      if (acc.size() != p.tensor.numel()) {
        throw ContractError("checkpoint: accumulator size mismatch for " + p.name);
      }
      w.entry("adagrad." + p.name, p.tensor.shape(), acc);
    }
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());

  const auto magic = r.pod<std::array<char, 8>>();
  if (std::memcmp(magic.data(), kMagic, 8) != 0) r.fail("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  auto meta = parse_metadata(r.str(), r);

  Checkpoint ck;
  ck.params = net::init_params(model_config_from_map(meta), 0);
  std::map<std::string, Tensor> params;
  for (const auto& p : ck.params.named()) params.emplace(p.name, p.tensor);

  const bool has_optimizer = meta.count("adagrad.epsilon") > 0;
  if (has_optimizer) {
    train::OptimizerState st;
    st.epsilon = to_double(meta["adagrad.epsilon"], "adagrad.epsilon");
    st.steps = to_size(get(meta, "adagrad.steps"), "adagrad.steps");
    ck.optimizer = st;
  }

  std::set<std::string> seen;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.str();
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) r.fail("entry " + name + " has implausible rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    const std::size_t n = shape_numel(shape);
    std::vector<double> values = r.doubles(n);
    if (!seen.insert(name).second) r.fail("duplicate entry " + name);

    if (name == "norm.mean" || name == "norm.scale") {
      if (n != 3) r.fail(name + " must hold 3 values");
      auto& dst = name == "norm.mean" ? ck.stats.mean : ck.stats.scale;
      std::copy(values.begin(), values.end(), dst.begin());
      continue;
    }
    const bool is_acc = name.rfind("adagrad.", 0) == 0;
    const std::string pname = is_acc ? name.substr(8) : name;
    const auto it = params.find(pname);
    if (it == params.end()) r.fail("unknown entry " + name);
    if (it->second.shape() != shape) {
      r.fail("entry " + name + " has shape " + shape_str(shape) + ", the model expects " +
             shape_str(it->second.shape()));
    }
    if (is_acc) {
      if (!ck.optimizer) r.fail("optimizer entry " + name + " without optimizer metadata");
      ck.optimizer->accumulators[pname] = std::move(values);
    } else {
      auto dst = it->second.mutable_data();
      std::copy(values.begin(), values.end(), dst.begin());
    }
  }
  if (!r.done()) r.fail("trailing bytes after the last entry");
  for (const auto& [name, t] : params) {
    if (!seen.count(name)) r.fail("missing parameter " + name);
  }
  if (!seen.count("norm.mean") || !seen.count("norm.scale")) r.fail("missing normalization statistics");

  for (const auto& [k, v] : meta) {
    if (k.rfind("model.", 0) != 0 && k.rfind("adagrad.", 0) != 0) ck.metadata[k] = v;
  }
  return ck;
}

}  // namespace magicvo::ckpt
