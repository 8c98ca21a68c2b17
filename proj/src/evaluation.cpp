#include "magicvo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

#include "magicvo/errors.hpp"

namespace magicvo::eval {

using geometry::SE3;
using geometry::Trajectory;
using geometry::Vec3;

const std::vector<double>& default_segment_lengths() {
  static const std::vector<double> lengths{5.0, 10.0, 20.0, 40.0};
  return lengths;
}

std::vector<double> path_distances(const Trajectory& truth) {
  std::vector<double> d(truth.size(), 0.0);
  for (std::size_t i = 1; i < truth.size(); ++i) {
    d[i] = d[i - 1] + (truth.poses[i].translation - truth.poses[i - 1].translation).norm();
  }
  return d;
}

namespace {

void check_aligned(const Trajectory& pred, const Trajectory& truth, std::size_t min_poses) {
  if (pred.size() != truth.size()) {
    throw ContractError("trajectory length mismatch: predicted has " + std::to_string(pred.size()) +
                        " poses, ground truth has " + std::to_string(truth.size()));
  }
  if (truth.size() < min_poses) {
    throw ContractError("trajectory needs at least " + std::to_string(min_poses) + " poses, got " +
                        std::to_string(truth.size()));
  }
}

}  // namespace

SegmentErrorReport segment_errors(const Trajectory& pred, const Trajectory& truth,
                                  const std::vector<double>& lengths) {
  check_aligned(pred, truth, 2);
  const std::vector<double> dist = path_distances(truth);
  const std::size_t n = truth.size();
  constexpr double kDeg = 180.0 / std::numbers::pi;

  SegmentErrorReport report;
  for (double length : lengths) {
    if (!(length > 0)) throw ContractError("segment length must be positive");
    double sum_t = 0.0, sum_r = 0.0;
    std::size_t count = 0;
    std::size_t last = 0;
    for (std::size_t first = 0; first < n; ++first) {
      // dist is nondecreasing, so the end index only moves forward.
      last = std::max(last, first + 1);
      while (last < n && !(dist[last] - dist[first] > length)) ++last;
      if (last >= n) break;
      const SE3 rel_truth = truth.poses[first].inverse() * truth.poses[last];
      const SE3 rel_pred = pred.poses[first].inverse() * pred.poses[last];
      const SE3 err = rel_truth.inverse() * rel_pred;
      const double d = dist[last] - dist[first];
      const double t = err.translation.norm() / d * 100.0;
      const double r = geometry::rotation_angle(err.rotation) * kDeg / d * 100.0;
      sum_t += t * t;
      sum_r += r * r;
      ++count;
    }
    if (count == 0) continue;
    const double c = static_cast<double>(count);
    report.rows.push_back({length, count, std::sqrt(sum_t / c), std::sqrt(sum_r / c)});
  }
  if (report.rows.empty()) {
    std::clog << "warning: trajectory path length " << dist.back()
              << " m is shorter than every requested segment length; empty report\n";
    return report;
  }
  for (const auto& row : report.rows) {
    report.mean_translation_percent += row.translation_percent;
    report.mean_rotation_deg_per_100m += row.rotation_deg_per_100m;
  }
  report.mean_translation_percent /= static_cast<double>(report.rows.size());
  report.mean_rotation_deg_per_100m /= static_cast<double>(report.rows.size());
  return report;
}

double ate_rmse(const Trajectory& pred, const Trajectory& truth) {
  check_aligned(pred, truth, 1);
  const SE3 p0 = pred.poses.front().inverse();
  const SE3 t0 = truth.poses.front().inverse();
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss += ((p0 * pred.poses[i]).translation - (t0 * truth.poses[i]).translation).squaredNorm();
  }
  return std::sqrt(ss / static_cast<double>(truth.size()));
}

Trajectory baseline_constant_velocity(const Trajectory& truth) {
  if (truth.size() < 2) throw ContractError("baseline needs at least 2 poses");
  const auto rel = geometry::decompose_trajectory(truth);
  const std::size_t half = std::max<std::size_t>(1, rel.size() / 2);
  geometry::Pose6DoF mean;
  for (std::size_t i = 0; i < half; ++i) {
    mean.translation += rel[i].translation;
    mean.euler += rel[i].euler;
  }
  mean.translation /= static_cast<double>(half);
  mean.euler /= static_cast<double>(half);
  Trajectory out = geometry::compose_trajectory(std::vector<geometry::Pose6DoF>(rel.size(), mean));
  // Start where the truth starts so both share the first pose.
  for (auto& p : out.poses) p = truth.poses.front() * p;
  out.timestamps = truth.timestamps;
  return out;
}

std::string report_csv(const SegmentErrorReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "length_m,segments,translation_error_percent,rotation_error_deg_per_100m\n";
  std::size_t total = 0;
  for (const auto& r : report.rows) {
    os << r.length_m << ',' << r.segments << ',' << r.translation_percent << ','
       << r.rotation_deg_per_100m << '\n';
    total += r.segments;
  }
  os << "mean," << total << ',' << report.mean_translation_percent << ','
     << report.mean_rotation_deg_per_100m << '\n';
  return os.str();
}

std::string report_table(const SegmentErrorReport& report, double ate) {
  std::ostringstream os;
  char line[160];
  os << "segment length   segments   t (%)      r (deg/100m)\n";
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%10.2f m   %8zu   %8.4f   %10.4f\n", r.length_m, r.segments,
                  r.translation_percent, r.rotation_deg_per_100m);
    os << line;
  }
  if (report.empty()) {
    os << "(no segment fits inside the trajectory)\n";
  } else {
    std::snprintf(line, sizeof line, "%12s   %8s   %8.4f   %10.4f\n", "mean", "",
                  report.mean_translation_percent, report.mean_rotation_deg_per_100m);
    os << line;
  }
  std::snprintf(line, sizeof line, "ATE RMSE: %.6f m\n", ate);
  os << line;
  return os.str();
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

}  // namespace

std::string trajectory_svg(const Trajectory& pred, const Trajectory& truth, const std::string& title) {
  const double width = 640, height = 520, margin = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, zmin = xmin, zmax = -xmin;
  for (const auto* traj : {&pred, &truth}) {
    for (const auto& p : traj->poses) {
      xmin = std::min(xmin, p.translation.x());
      xmax = std::max(xmax, p.translation.x());
      zmin = std::min(zmin, p.translation.z());
      zmax = std::max(zmax, p.translation.z());
    }
  }
  if (!std::isfinite(xmin)) xmin = xmax = zmin = zmax = 0;
  // Equal scale on both axes, with a little padding.
  double span = std::max({xmax - xmin, zmax - zmin, 1.0}) * 1.1;
  const double cx = (xmin + xmax) / 2, cz = (zmin + zmax) / 2;
  xmin = cx - span / 2;
  zmin = cz - span / 2;
  const double plot = std::min(width, height) - 2 * margin;
  const double scale = plot / span;
  auto sx = [&](double x) { return margin + (x - xmin) * scale; };
  auto sy = [&](double z) { return margin + plot - (z - zmin) * scale; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"16\">" << title
     << "</text>\n";

  // Axes with ticks.
  os << "<g stroke=\"#444\" stroke-width=\"1\" fill=\"none\">\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot << "\" height=\"" << plot
     << "\"/>\n</g>\n";
  const double step = nice_step(span);
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (double v = std::ceil(xmin / step) * step; v <= xmin + span; v += step) {
    os << "<line x1=\"" << fmt(sx(v)) << "\" y1=\"" << margin + plot << "\" x2=\"" << fmt(sx(v))
       << "\" y2=\"" << margin + plot + 5 << "\" stroke=\"#444\"/>";
    os << "<text x=\"" << fmt(sx(v)) << "\" y=\"" << margin + plot + 18
       << "\" text-anchor=\"middle\">" << v << "</text>\n";
  }
  for (double v = std::ceil(zmin / step) * step; v <= zmin + span; v += step) {
    os << "<line x1=\"" << margin - 5 << "\" y1=\"" << fmt(sy(v)) << "\" x2=\"" << margin << "\" y2=\""
       << fmt(sy(v)) << "\" stroke=\"#444\"/>";
    os << "<text x=\"" << margin - 8 << "\" y=\"" << fmt(sy(v) + 4) << "\" text-anchor=\"end\">" << v
       << "</text>\n";
  }
  os << "<text x=\"" << margin + plot / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\">x (m)</text>\n";
  os << "<text x=\"16\" y=\"" << margin + plot / 2 << "\" transform=\"rotate(-90 16 "
     << margin + plot / 2 << ")\" text-anchor=\"middle\">z (m)</text>\n</g>\n";

  auto polyline = [&](const Trajectory& t, const char* id, const char* label, const char* color) {
    os << "<polyline id=\"" << id << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) os << ' ';
      os << fmt(sx(t.poses[i].translation.x())) << ',' << fmt(sy(t.poses[i].translation.z()));
    }
    os << "\"><title>" << label << "</title></polyline>\n";
  };
  polyline(truth, "ground_truth", "ground truth", "#222222");
  polyline(pred, "predicted", "predicted", "#d62728");

  const double lx = margin + plot + 12;
  os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<line x1=\"" << lx << "\" y1=\"" << margin + 10 << "\" x2=\"" << lx + 24 << "\" y2=\""
     << margin + 10 << "\" stroke=\"#222222\" stroke-width=\"2\"/>";
  os << "<text x=\"" << lx + 30 << "\" y=\"" << margin + 14 << "\">ground truth</text>\n";
  os << "<line x1=\"" << lx << "\" y1=\"" << margin + 30 << "\" x2=\"" << lx + 24 << "\" y2=\""
     << margin + 30 << "\" stroke=\"#d62728\" stroke-width=\"2\"/>";
  os << "<text x=\"" << lx + 30 << "\" y=\"" << margin + 34 << "\">predicted</text>\n</g>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace magicvo::eval
