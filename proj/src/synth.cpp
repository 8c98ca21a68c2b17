#include "magicvo/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "magicvo/errors.hpp"

namespace magicvo::synth {

using geometry::Mat3;
using geometry::SE3;
using geometry::Vec3;

PathType parse_path_type(const std::string& name) {
  if (name == "line") return PathType::Line;
  if (name == "arc") return PathType::Arc;
  if (name == "figure-eight" || name == "figure_eight" || name == "figure8") return PathType::FigureEight;
  throw ConfigError("unknown path type '" + name + "' (expected line, arc or figure-eight)");
}

std::string path_type_name(PathType type) {
  switch (type) {
    case PathType::Line: return "line";
    case PathType::Arc: return "arc";
    case PathType::FigureEight: return "figure-eight";
  }
  return "?";
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("synth: " + msg); };
  if (frame_count < 2) fail("frame_count must be at least 2, got " + std::to_string(frame_count));
  if (height < 2 || width < 2) fail("image size must be at least 2x2");
  if (!(speed > 0) || !std::isfinite(speed)) fail("speed must be positive (zero-length path)");
  if (!(speed_variation >= 0 && speed_variation < 1)) fail("speed_variation must be in [0, 1)");
  if (!(speed_period > 0)) fail("speed_period must be positive");
  if (!std::isfinite(speed_phase)) fail("speed_phase must be finite");
  if (path == PathType::Arc && (!std::isfinite(yaw_rate) || std::abs(yaw_rate) < 1e-12)) {
    fail("arc path needs a nonzero yaw_rate");
  }
  if (path == PathType::FigureEight && !(figure_eight_size > 0)) fail("figure_eight_size must be positive");
  if (!(camera_height > 0)) fail("camera_height must be positive");
  if (supersample < 1) fail("supersample must be at least 1");
}

namespace {

Mat3 heading(double theta) { return geometry::euler_to_rotation(Vec3(0, theta, 0)); }

double step_speed(const SynthSpec& s, std::size_t k) {
  return s.speed * (1.0 + s.speed_variation *
                              std::sin(2 * std::numbers::pi * static_cast<double>(k) / s.speed_period +
                                       s.speed_phase));
}

std::vector<SE3> line_or_arc(const SynthSpec& s) {
  const double w = s.path == PathType::Arc ? s.yaw_rate : 0.0;
  std::vector<SE3> poses(s.frame_count);
  for (std::size_t i = 0; i < s.frame_count; ++i) {
    poses[i].rotation = w == 0.0 ? Mat3::Identity() : heading(w * static_cast<double>(i));
    if (i == 0) continue;
    const double v = step_speed(s, i - 1);
    // Chord of a circular arc of length v turning by w, in the previous frame.
    const Vec3 chord = w == 0.0 ? Vec3(0, 0, v)
                                : Vec3(v * (1 - std::cos(w)) / w, 0, v * std::sin(w) / w);
    poses[i].translation = poses[i - 1].translation + poses[i - 1].rotation * chord;
  }
  return poses;
}

std::vector<SE3> figure_eight(const SynthSpec& s) {
  const double a = s.figure_eight_size;
  const double du = s.speed / a;
  std::vector<SE3> poses(s.frame_count);
  for (std::size_t i = 0; i < s.frame_count; ++i) {
    const double u = du * static_cast<double>(i);
    const double x = a * std::sin(u) * std::cos(u), z = a * std::sin(u);
    const double dx = a * std::cos(2 * u), dz = a * std::cos(u);
    poses[i].rotation = heading(std::atan2(dx, dz));
    poses[i].translation = Vec3(x, 0, z);
  }
  const SE3 inv0 = poses[0].inverse();
  for (auto& p : poses) p = inv0 * p;
  return poses;
}

// Deterministic value noise.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  const std::uint64_t h = mix(seed ^ mix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL ^
                                         mix(static_cast<std::uint64_t>(j))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3 - 2 * tx);
  ty = ty * ty * (3 - 2 * ty);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

// Octave sum with octaves faded out once their wavelength nears the sample
// footprint.
double fbm(std::uint64_t seed, double x, double y, double base_freq, int octaves, double footprint) {
  double sum = 0, norm = 0, amp = 1, freq = base_freq;
  for (int o = 0; o < octaves; ++o) {
    const double fade = std::clamp(1.5 - 2.0 * footprint * freq, 0.0, 1.0);
    const double n = value_noise(seed + static_cast<std::uint64_t>(o) * 7919, x * freq, y * freq);
    sum += amp * (fade * n + (1 - fade) * 0.5);
    norm += amp;
    amp *= 0.6;
    freq *= 2;
  }
  return sum / norm;
}

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

struct Landmark {
  Vec3 center, normal, u;
  double half;
  Rgb color_a, color_b;
  int cells;
  std::uint64_t noise_seed;
};

struct Scene {
  std::uint64_t ground_seed, sky_seed;
  Rgb ground_dark, ground_light;
  double hill_phase;
  std::vector<Landmark> landmarks;
};

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.1, 0.95);
  return {d(rng), d(rng), d(rng)};
}

Scene build_scene(const SynthSpec& spec, const std::vector<SE3>& poses) {
  std::mt19937_64 rng(mix(spec.seed ^ 0x5eedULL));
  Scene scene;
  scene.ground_seed = rng();
  scene.sky_seed = rng();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  scene.ground_dark = {0.20 + 0.1 * unit(rng), 0.22 + 0.1 * unit(rng), 0.15 + 0.1 * unit(rng)};
  scene.ground_light = {0.60 + 0.2 * unit(rng), 0.55 + 0.2 * unit(rng), 0.45 + 0.2 * unit(rng)};
  scene.hill_phase = unit(rng) * 1000;

  std::uniform_int_distribution<std::size_t> pick(0, poses.size() - 1);
  std::uniform_real_distribution<double> lateral(2.5, 9.0), ahead(3.0, 20.0), size(0.6, 2.2),
      angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_int_distribution<int> cells(2, 5);
  for (std::size_t n = 0; n < spec.landmarks; ++n) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const SE3& at = poses[pick(rng)];
      const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double half = size(rng) / 2;
      Vec3 c = at * Vec3(side * lateral(rng), 0, ahead(rng));
      c.y() = spec.camera_height - half;
      double clearance = std::numeric_limits<double>::infinity();
      for (const auto& p : poses) {
        clearance = std::min(clearance, std::hypot(p.translation.x() - c.x(), p.translation.z() - c.z()));
      }
      if (clearance < 1.2 + half) continue;
      const double a = angle(rng);
      Landmark lm;
      lm.center = c;
      lm.normal = Vec3(std::sin(a), 0, std::cos(a));
      lm.u = Vec3(std::cos(a), 0, -std::sin(a));
      lm.half = half;
      lm.color_a = random_color(rng);
      lm.color_b = random_color(rng);
      lm.cells = cells(rng);
      lm.noise_seed = rng();
      scene.landmarks.push_back(lm);
      break;
    }
  }
  return scene;
}

Rgb shade(const Scene& scene, const SynthSpec& spec, const Vec3& origin, const Vec3& dir, double focal) {
  const double dnorm = dir.norm();
  double best = std::numeric_limits<double>::infinity();
  Rgb color{};

  if (dir.y() > 1e-9) {
    const double lambda = (spec.camera_height - origin.y()) / dir.y();
    const Vec3 p = origin + lambda * dir;
    const double dist = lambda * dnorm;
    const double footprint = dist * dist / (spec.camera_height * focal);
    const double n = fbm(scene.ground_seed, p.x(), p.z(), 0.3, 6, footprint);
    const double stripes = 0.5 + 0.5 * std::sin(p.x() * 1.7 + 2.3 * value_noise(scene.ground_seed + 1, p.x() * 0.2, p.z() * 0.2));
    // Paving: one random shade per cell of a warped grid, the main cue for
    // metric speed near the camera.
    constexpr double kCell = 0.8;
    const double warp = value_noise(scene.ground_seed + 2, p.x() * 0.25, p.z() * 0.25);
    const double cell = lattice(scene.ground_seed + 3, static_cast<std::int64_t>(std::floor(p.x() / kCell + warp)),
                                static_cast<std::int64_t>(std::floor(p.z() / kCell - warp)));
    const double cell_fade = std::clamp(1.5 - footprint / kCell, 0.0, 1.0);
    const double t = 0.5 + 1.2 * (n - 0.5) + 0.7 * cell_fade * (cell - 0.5) + 0.1 * (stripes - 0.5);
    color = lerp(scene.ground_dark, scene.ground_light, std::clamp(t, 0.0, 1.0));
    best = lambda;
  }

  for (const auto& lm : scene.landmarks) {
    const double denom = dir.dot(lm.normal);
    if (std::abs(denom) < 1e-9) continue;
    const double lambda = (lm.center - origin).dot(lm.normal) / denom;
    if (lambda <= 0.05 || lambda >= best) continue;
    const Vec3 rel = origin + lambda * dir - lm.center;
    const double a = rel.dot(lm.u), b = rel.y();
    if (std::abs(a) > lm.half || std::abs(b) > lm.half) continue;
    best = lambda;
    const double ca = (a / lm.half + 1) * 0.5 * lm.cells, cb = (b / lm.half + 1) * 0.5 * lm.cells;
    const bool check = (static_cast<int>(std::floor(ca)) + static_cast<int>(std::floor(cb))) % 2 == 0;
    const double n = value_noise(lm.noise_seed, ca * 2, cb * 2);
    color = lerp(check ? lm.color_a : lm.color_b, {n, n, n}, 0.25);
    const double lit = 0.75 + 0.25 * std::abs(lm.normal.x());
    for (double& c : color) c *= lit;
  }

  if (!std::isfinite(best)) {
    // Sky with a distant hill line; both depend only on direction.
    const double elevation = -dir.y() / std::hypot(dir.x(), dir.z());
    const double azimuth = std::atan2(dir.x(), dir.z());
    const double ridge = 0.03 + 0.09 * fbm(scene.sky_seed, azimuth * 3 + scene.hill_phase, 0.5, 1.0, 3, 0.0);
    if (elevation < ridge) {
      const double t = value_noise(scene.sky_seed + 3, azimuth * 20, elevation * 40);
      color = lerp({0.25, 0.32, 0.30}, {0.40, 0.45, 0.42}, t);
    } else {
      const double cloud = fbm(scene.sky_seed + 5, azimuth * 4, elevation * 6, 1.0, 3, 0.0);
      color = lerp({0.55, 0.70, 0.90}, {0.30, 0.45, 0.80}, std::clamp(elevation * 2, 0.0, 1.0));
      color = lerp(color, {0.95, 0.95, 0.97}, std::clamp((cloud - 0.55) * 3, 0.0, 0.8));
    }
    return color;
  }

  const double fog = 1 - std::exp(-best * dnorm / 60.0);
  return lerp(color, {0.70, 0.75, 0.80}, fog);
}

Image render(const Scene& scene, const SynthSpec& spec, const SE3& pose) {
  Image img(spec.width, spec.height);
  const double focal = static_cast<double>(spec.width) / 2;
  const double cx = (static_cast<double>(spec.width) - 1) / 2;
  const double cy = (static_cast<double>(spec.height) - 1) / 2;
  const std::size_t ss = spec.supersample;
  const double inv = 1.0 / static_cast<double>(ss * ss);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      Rgb acc{};
      for (std::size_t sy = 0; sy < ss; ++sy) {
        for (std::size_t sx = 0; sx < ss; ++sx) {
          const double px = static_cast<double>(x) + (static_cast<double>(sx) + 0.5) / static_cast<double>(ss) - 0.5;
          const double py = static_cast<double>(y) + (static_cast<double>(sy) + 0.5) / static_cast<double>(ss) - 0.5;
          const Vec3 dir = pose.rotation * Vec3((px - cx) / focal, (py - cy) / focal, 1.0);
          const Rgb c = shade(scene, spec, pose.translation, dir, focal);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = std::clamp(acc[k] * inv, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

std::vector<SE3> generate_poses(const SynthSpec& spec) {
  spec.validate();
  return spec.path == PathType::FigureEight ? figure_eight(spec) : line_or_arc(spec);
}

SynthSequence generate(const SynthSpec& spec) {
  SynthSequence out;
  out.poses = generate_poses(spec);
  const Scene scene = build_scene(spec, out.poses);
  out.frames.reserve(out.poses.size());
  for (const auto& pose : out.poses) out.frames.push_back(render(scene, spec, pose));
  return out;
}

std::string describe(const SynthSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << "path=" << path_type_name(s.path) << "\nframes=" << s.frame_count << "\nheight=" << s.height
     << "\nwidth=" << s.width << "\nseed=" << s.seed << "\nspeed=" << s.speed
     << "\nyaw_rate=" << s.yaw_rate << "\nspeed_variation=" << s.speed_variation
     << "\nspeed_period=" << s.speed_period << "\nspeed_phase=" << s.speed_phase
     << "\nfigure_eight_size=" << s.figure_eight_size << "\ncamera_height=" << s.camera_height
     << "\nlandmarks=" << s.landmarks << "\nsupersample=" << s.supersample << "\n";
  return os.str();
}

std::vector<SynthSpec> mixed_specs(std::size_t count, std::size_t frame_count, std::uint64_t seed,
                                   std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speed(0.3, 0.7), turn(0.02, 0.08), variation(0.25, 0.5),
      period(16.0, 30.0), phase(0.0, 2 * std::numbers::pi), coin(0.0, 1.0);
  std::vector<SynthSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s;
    s.path = i % 2 == 0 ? PathType::Line : PathType::Arc;
    s.frame_count = frame_count;
    s.height = height;
    s.width = width;
    s.speed = speed(rng);
    s.yaw_rate = turn(rng) * (coin(rng) < 0.5 ? -1.0 : 1.0);
    s.speed_variation = variation(rng);
    s.speed_period = period(rng);
    s.speed_phase = phase(rng);
    s.seed = rng();
    specs.push_back(s);
  }
  return specs;
}

}  // namespace magicvo::synth
