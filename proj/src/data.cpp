#include "magicvo/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "magicvo/errors.hpp"

namespace magicvo::data {

namespace fs = std::filesystem;
using geometry::Mat3;
using geometry::SE3;
using geometry::Vec3;

NormalizationStats compute_stats(const std::vector<Image>& frames, ScaleMode mode) {
  if (frames.empty()) throw ContractError("compute_stats: no frames");
  // Welford accumulation per channel.
  std::array<double, 3> mean{}, m2{};
  std::size_t count = 0;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i + 2 < f.pixels.size(); i += 3) {
      ++count;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = f.pixels[i + c];
        const double delta = v - mean[c];
        mean[c] += delta / static_cast<double>(count);
        m2[c] += delta * (v - mean[c]);
      }
    }
  }
  if (count == 0) throw ContractError("compute_stats: frames contain no pixels");
  NormalizationStats stats;
  stats.mean = mean;
  for (std::size_t c = 0; c < 3; ++c) {
    const double variance = m2[c] / static_cast<double>(count);
    double scale = mode == ScaleMode::Variance ? variance : std::sqrt(variance);
    if (!(scale >= 1e-6)) {
      std::clog << "warning: channel " << c << " has near-zero spread; scale floored at 1e-6\n";
      scale = 1e-6;
    }
    stats.scale[c] = scale;
  }
  return stats;
}

FramePairStack NormalizedFrames::stack(std::size_t first_pair, std::size_t pairs) const {
  if (pairs == 0 || first_pair + pairs + 1 > count) {
    throw ContractError("stack: pairs [" + std::to_string(first_pair) + ", " +
                        std::to_string(first_pair + pairs) + ") need frames beyond the " +
                        std::to_string(count) + " available");
  }
  const std::size_t fs = frame_stride();
  std::vector<double> out(pairs * 2 * fs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto src = values.begin() + static_cast<std::ptrdiff_t>((first_pair + p) * fs);
    std::copy_n(src, 2 * fs, out.begin() + static_cast<std::ptrdiff_t>(p * 2 * fs));
  }
  return {Tensor::from({pairs, 6, height, width}, std::move(out))};
}

NormalizedFrames normalize_frames(const std::vector<Image>& frames,
                                  const NormalizationStats& stats, TargetSize target) {
  if (frames.empty()) throw ContractError("normalize_frames: no frames");
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(stats.scale[c] > 0)) throw ContractError("normalize_frames: scale must be positive");
  }
  NormalizedFrames out;
  out.count = frames.size();
  out.height = target.height;
  out.width = target.width;
  out.values.resize(out.count * out.frame_stride());
  const std::size_t plane = target.height * target.width;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (!frames[f].same_size(frames.front())) {
      throw ContractError("preprocess: frame " + std::to_string(f) + " is " +
                          std::to_string(frames[f].width) + "x" + std::to_string(frames[f].height) +
                          ", expected " + std::to_string(frames.front().width) + "x" +
                          std::to_string(frames.front().height));
    }
    const Image img = resize_bilinear(frames[f], target.width, target.height);
    double* dst = out.values.data() + f * out.frame_stride();
    for (std::size_t y = 0; y < target.height; ++y) {
      for (std::size_t x = 0; x < target.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          dst[c * plane + y * target.width + x] = (img.at(x, y, c) - stats.mean[c]) / stats.scale[c];
        }
      }
    }
  }
  return out;
}

FramePairStack preprocess(const std::vector<Image>& frames, const NormalizationStats& stats,
                          TargetSize target) {
  if (frames.size() < 2) {
    throw ContractError("preprocess: need at least 2 frames, got " + std::to_string(frames.size()));
  }
  const NormalizedFrames norm = normalize_frames(frames, stats, target);
  return norm.stack(0, frames.size() - 1);
}

std::vector<Image> unnormalize(const FramePairStack& stack, const NormalizationStats& stats) {
  const Tensor& t = stack.tensor;
  const std::size_t pairs = t.dim(0), h = t.dim(2), w = t.dim(3), plane = h * w;
  auto extract = [&](std::size_t pair, std::size_t channel_offset) {
    Image img(w, h);
    const double* src = t.data().data() + pair * 6 * plane;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        img.pixels[i * 3 + c] = src[(channel_offset + c) * plane + i] * stats.scale[c] + stats.mean[c];
      }
    }
    return img;
  };
  std::vector<Image> frames{extract(0, 0)};
  for (std::size_t p = 0; p < pairs; ++p) frames.push_back(extract(p, 3));
  return frames;
}

Tensor poses_to_targets(const std::vector<geometry::Pose6DoF>& relatives) {
  if (relatives.empty()) throw ContractError("poses_to_targets: no poses");
  std::vector<double> v;
  v.reserve(relatives.size() * 6);
  for (const auto& p : relatives) {
    v.insert(v.end(), {p.translation.x(), p.translation.y(), p.translation.z(), p.euler.x(),
                       p.euler.y(), p.euler.z()});
  }
  return Tensor::from({relatives.size(), 6}, std::move(v));
}

std::vector<geometry::Pose6DoF> targets_to_poses(const Tensor& rows) {
  if (rows.rank() != 2 || rows.dim(1) != 6) {
    throw ShapeError("targets_to_poses: expected [T, 6], got " + shape_str(rows.shape()));
  }
  std::vector<geometry::Pose6DoF> out(rows.dim(0));
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double* r = rows.data().data() + t * 6;
    out[t] = {Vec3(r[0], r[1], r[2]), Vec3(r[3], r[4], r[5])};
  }
  return out;
}

std::vector<SE3> parse_kitti_poses(std::string_view text) {
  std::vector<SE3> poses;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    std::vector<double> values;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      if (pos >= line.size()) break;
      double v = 0.0;
      const auto [end, ec] = std::from_chars(line.data() + pos, line.data() + line.size(), v);
      if (ec != std::errc() ||
          (end != line.data() + line.size() && !std::isspace(static_cast<unsigned char>(*end)))) {
        throw ParseError("kitti poses: line " + std::to_string(line_no) + ": invalid number");
      }
      values.push_back(v);
      pos = static_cast<std::size_t>(end - line.data());
    }
    if (values.empty()) continue;
    if (values.size() != 12) {
      throw ParseError("kitti poses: line " + std::to_string(line_no) + ": expected 12 values, got " +
                       std::to_string(values.size()));
    }
    SE3 pose;
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) pose.rotation(r, c) = values[r * 4 + c];
      pose.translation(r) = values[r * 4 + 3];
    }
    if (geometry::orthonormality_error(pose.rotation) > 1e-3) {
      std::clog << "warning: kitti poses line " << line_no
                << ": rotation is not orthonormal; projecting onto SO(3)\n";
      pose.rotation = geometry::nearest_rotation(pose.rotation);
    }
    poses.push_back(pose);
  }
  return poses;
}

std::string serialize_kitti_poses(const std::vector<SE3>& poses) {
  std::string out;
  char buf[32];
  for (const auto& p : poses) {
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double v = c < 3 ? p.rotation(r, c) : p.translation(r);
        std::snprintf(buf, sizeof buf, "%.17g", v);
        if (r || c) out += ' ';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<SE3> read_kitti_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("kitti poses: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kitti_poses(ss.str());
}

void write_kitti_poses(const fs::path& path, const std::vector<SE3>& poses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("kitti poses: cannot write " + path.string());
  out << serialize_kitti_poses(poses);
}

std::string trajectory_csv(const geometry::Trajectory& trajectory) {
  std::string out = "frame,tx,ty,tz,roll,pitch,yaw\n";
  char buf[256];
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    auto p = geometry::to_pose(trajectory.poses[i]);
    p.translation.array() += 0.0;  // prints -0 as 0
    p.euler.array() += 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, p.translation.x(),
                  p.translation.y(), p.translation.z(), p.euler.x(), p.euler.y(), p.euler.z());
    out += buf;
  }
  return out;
}

fs::path sequence_image_dir(const fs::path& root, const std::string& id) {
  return root / "sequences" / id / "image_2";
}

fs::path sequence_pose_file(const fs::path& root, const std::string& id) {
  return root / "poses" / (id + ".txt");
}

std::vector<std::string> list_sequences(const fs::path& root) {
  std::vector<std::string> ids;
  const fs::path poses = root / "poses";
  if (!fs::is_directory(poses)) return ids;
  for (const auto& entry : fs::directory_iterator(poses)) {
    if (entry.path().extension() != ".txt") continue;
    const std::string id = entry.path().stem().string();
    if (fs::is_directory(sequence_image_dir(root, id))) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<Image> load_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_png(f));
  return frames;
}

Sequence load_sequence(const fs::path& root, const std::string& id) {
  Sequence seq;
  seq.id = id;
  seq.frames = load_image_dir(sequence_image_dir(root, id));
  const fs::path pose_file = sequence_pose_file(root, id);
  if (fs::exists(pose_file)) {
    seq.poses = read_kitti_poses(pose_file);
    if (seq.poses.size() != seq.frames.size()) {
      throw ParseError("sequence " + id + ": " + std::to_string(seq.frames.size()) +
                       " frames but " + std::to_string(seq.poses.size()) + " poses");
    }
  }
  return seq;
}

void write_sequence(const fs::path& root, const Sequence& seq) {
  const fs::path images = sequence_image_dir(root, seq.id);
  fs::create_directories(images);
  fs::create_directories(root / "poses");
  char name[32];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png(images / name, seq.frames[i]);
  }
  write_kitti_poses(sequence_pose_file(root, seq.id), seq.poses);
}

WindowedDataset::WindowedDataset(const std::vector<Sequence>& sequences,
                                 const NormalizationStats& stats, TargetSize target,
                                 std::size_t window)
    : window_(window) {
  if (window == 0) throw ConfigError("dataset: window length must be >= 1");
  const std::size_t stride = std::max<std::size_t>(1, window / 2);
  for (const auto& seq : sequences) {
    if (seq.poses.size() != seq.frames.size()) {
      throw ContractError("dataset: sequence " + seq.id + " lacks ground truth for every frame");
    }
    if (seq.frames.size() < window + 1) {
      std::clog << "warning: sequence " << seq.id << " has " << seq.frames.size()
                << " frames, fewer than one window of " << window << " pairs; skipped\n";
      continue;
    }
    Prepared p;
    p.id = seq.id;
    p.frames = normalize_frames(seq.frames, stats, target);
    geometry::Trajectory truth;
    truth.poses = seq.poses;
    p.relatives = geometry::decompose_trajectory(truth);
    const std::size_t pairs = p.relatives.size();
    for (std::size_t first = 0; first + window <= pairs; first += stride) {
      windows_.push_back({prepared_.size(), first});
    }
    prepared_.push_back(std::move(p));
  }
}

SequenceSample WindowedDataset::sample(std::size_t index) const {
  const Window& w = windows_.at(index);
  const Prepared& p = prepared_[w.sequence];
  const std::vector<geometry::Pose6DoF> rel(
      p.relatives.begin() + static_cast<std::ptrdiff_t>(w.first_pair),
      p.relatives.begin() + static_cast<std::ptrdiff_t>(w.first_pair + window_));
  return {p.frames.stack(w.first_pair, window_), poses_to_targets(rel),
          p.id + "@" + std::to_string(w.first_pair)};
}

}  // namespace magicvo::data
