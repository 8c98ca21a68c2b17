#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "magicvo/geometry.hpp"
#include "magicvo/image.hpp"
#include "magicvo/tensor.hpp"

namespace magicvo::data {

struct NormalizationStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};  // > 0
};

enum class ScaleMode {
  StdDev,    // divide by the per-channel standard deviation (default)
  Variance,  // divide by the variance itself
};

/// Per-channel mean and spread over every pixel of every frame. A channel
/// whose spread is below 1e-6 is floored there and a warning is logged.
NormalizationStats compute_stats(const std::vector<Image>& frames,
                                 ScaleMode mode = ScaleMode::StdDev);

struct TargetSize {
  std::size_t height = 48;
  std::size_t width = 160;
};

/// [T, 6, H, W]; pair i holds frame i in channels 0-2 and frame i+1 in 3-5.
struct FramePairStack {
  Tensor tensor;
  std::size_t pairs() const { return tensor.dim(0); }
};

/// Resized, normalized frames in planar layout, one [3, H, W] block each.
struct NormalizedFrames {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  std::size_t frame_stride() const { return 3 * height * width; }
  /// Stacks frames [first, first + pairs] into pair tensors.
  FramePairStack stack(std::size_t first_pair, std::size_t pairs) const;
};

NormalizedFrames normalize_frames(const std::vector<Image>& frames,
                                  const NormalizationStats& stats, TargetSize target);

/// Resize to target, normalize, and stack adjacent pairs. Needs >= 2 frames
/// of identical size.
FramePairStack preprocess(const std::vector<Image>& frames, const NormalizationStats& stats,
                          TargetSize target);

/// Recovers the (resized) frames from a stack: pair 0's first half, then the
/// second half of every pair.
std::vector<Image> unnormalize(const FramePairStack& stack, const NormalizationStats& stats);

struct SequenceSample {
  FramePairStack stack;
  Tensor targets;  // [T, 6]: tx, ty, tz, roll, pitch, yaw
  std::string source_id;
};

Tensor poses_to_targets(const std::vector<geometry::Pose6DoF>& relatives);
std::vector<geometry::Pose6DoF> targets_to_poses(const Tensor& rows);

/// Each nonempty line: 12 reals, the top 3x4 of a camera-to-world transform,
/// row-major. Rotations off SO(3) by more than 1e-3 are repaired with a warning.
std::vector<geometry::SE3> parse_kitti_poses(std::string_view text);
std::string serialize_kitti_poses(const std::vector<geometry::SE3>& poses);
std::vector<geometry::SE3> read_kitti_poses(const std::filesystem::path& path);
void write_kitti_poses(const std::filesystem::path& path,
                       const std::vector<geometry::SE3>& poses);

/// Per-frame absolute poses: header `frame,tx,ty,tz,roll,pitch,yaw`, one row
/// per pose.
std::string trajectory_csv(const geometry::Trajectory& trajectory);

// Dataset layout (shared by synthetic and KITTI odometry data):
//   <root>/sequences/<id>/image_2/000000.png ...
//   <root>/poses/<id>.txt
std::filesystem::path sequence_image_dir(const std::filesystem::path& root,
                                         const std::string& id);
std::filesystem::path sequence_pose_file(const std::filesystem::path& root,
                                         const std::string& id);

struct Sequence {
  std::string id;
  std::vector<Image> frames;
  std::vector<geometry::SE3> poses;  // empty when ground truth is absent
};

/// Ids with both an image directory and a pose file, sorted.
std::vector<std::string> list_sequences(const std::filesystem::path& root);
/// PNG files of a directory in lexicographic filename order.
std::vector<Image> load_image_dir(const std::filesystem::path& dir);
Sequence load_sequence(const std::filesystem::path& root, const std::string& id);
void write_sequence(const std::filesystem::path& root, const Sequence& seq);

/// Source of training windows; implementations may build samples lazily.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual SequenceSample sample(std::size_t index) const = 0;
};

class VectorSampleSource : public SampleSource {
 public:
  explicit VectorSampleSource(std::vector<SequenceSample> samples)
      : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  SequenceSample sample(std::size_t index) const override { return samples_.at(index); }

 private:
  std::vector<SequenceSample> samples_;
};

/// Cuts each sequence into windows of `window` pairs with stride window/2
/// (at least 1). Sequences with fewer pairs than one window are skipped with
/// a warning; a final partial window is dropped.
class WindowedDataset : public SampleSource {
 public:
  WindowedDataset(const std::vector<Sequence>& sequences, const NormalizationStats& stats,
                  TargetSize target, std::size_t window);

  std::size_t size() const override { return windows_.size(); }
  SequenceSample sample(std::size_t index) const override;
  std::size_t sequence_count() const { return prepared_.size(); }

 private:
  struct Prepared {
    std::string id;
    NormalizedFrames frames;
    std::vector<geometry::Pose6DoF> relatives;
  };
  struct Window {
    std::size_t sequence;
    std::size_t first_pair;
  };
  std::vector<Prepared> prepared_;
  std::vector<Window> windows_;
  std::size_t window_;
};

}  // namespace magicvo::data
