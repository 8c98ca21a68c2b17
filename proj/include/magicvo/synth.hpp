#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "magicvo/data.hpp"
#include "magicvo/geometry.hpp"
#include "magicvo/image.hpp"

// Synthetic camera sequences with exact ground truth. A pinhole camera moves
// over a textured ground plane scattered with upright landmark squares. The
// camera stays level at a fixed height; all turning is about the camera
// y axis (down), so heading changes appear in the pitch slot of the
// (roll, pitch, yaw) convention.
namespace magicvo::synth {

enum class PathType { Line, Arc, FigureEight };

PathType parse_path_type(const std::string& name);
std::string path_type_name(PathType type);

struct SynthSpec {
  PathType path = PathType::Line;
  std::size_t frame_count = 41;
  std::size_t height = 48;
  std::size_t width = 160;
  std::uint64_t seed = 0;

  double speed = 0.5;       // meters per frame
  double yaw_rate = 0.05;   // radians per frame, arc only; positive turns right
  // Per-frame speed is speed * (1 + speed_variation * sin(2 pi i / speed_period + speed_phase)).
  double speed_variation = 0.0;  // in [0, 1)
  double speed_period = 20.0;    // frames
  double speed_phase = 0.0;      // radians
  double figure_eight_size = 12.0;  // lobe half-length in meters

  double camera_height = 1.2;  // meters above the ground plane
  std::size_t landmarks = 60;
  std::size_t supersample = 2;  // samples per pixel along each axis

  /// Throws ContractError for degenerate specs.
  void validate() const;
};

/// Exact camera-to-world poses, first pose at the identity.
std::vector<geometry::SE3> generate_poses(const SynthSpec& spec);

struct SynthSequence {
  std::vector<Image> frames;
  std::vector<geometry::SE3> poses;
};

SynthSequence generate(const SynthSpec& spec);

/// Spec as flat key=value lines, used for dataset manifests.
std::string describe(const SynthSpec& spec);

/// `count` specs alternating line and arc paths with randomized speed, turn
/// rate and direction, and speed modulation, all derived from `seed`.
std::vector<SynthSpec> mixed_specs(std::size_t count, std::size_t frame_count, std::uint64_t seed,
                                   std::size_t height = 48, std::size_t width = 160);

}  // namespace magicvo::synth
