#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "magicvo/geometry.hpp"

namespace magicvo::eval {

struct SegmentRow {
  double length_m = 0.0;
  std::size_t segments = 0;
  double translation_percent = 0.0;      // RMSE over segments
  double rotation_deg_per_100m = 0.0;    // RMSE over segments
};

struct SegmentErrorReport {
  std::vector<SegmentRow> rows;  // only lengths with at least one segment
  double mean_translation_percent = 0.0;
  double mean_rotation_deg_per_100m = 0.0;

  bool empty() const { return rows.empty(); }
};

const std::vector<double>& default_segment_lengths();

/// Cumulative truth path length at every pose, starting at 0.
std::vector<double> path_distances(const geometry::Trajectory& truth);

/// For each start frame and length L the segment ends at the first frame
/// whose truth path distance from the start exceeds L. The error transform
/// E = rel_truth^-1 * rel_pred is scored as |t_E| / d * 100 (%) and
/// angle(R_E) / d * 100 (deg per 100 m), where d is the truth path length of
/// that segment. Throws ContractError when pose counts differ or are < 2.
SegmentErrorReport segment_errors(const geometry::Trajectory& pred,
                                  const geometry::Trajectory& truth,
                                  const std::vector<double>& lengths = default_segment_lengths());

/// RMSE of translation differences after anchoring both trajectories at the
/// identity (each pose premultiplied by the inverse of its first pose).
double ate_rmse(const geometry::Trajectory& pred, const geometry::Trajectory& truth);

/// Repeats the mean relative motion of the first half of `truth`.
geometry::Trajectory baseline_constant_velocity(const geometry::Trajectory& truth);

std::string report_csv(const SegmentErrorReport& report);
std::string report_table(const SegmentErrorReport& report, double ate);

/// Top-down (x over z) SVG of a predicted and a ground-truth path.
std::string trajectory_svg(const geometry::Trajectory& pred, const geometry::Trajectory& truth,
                           const std::string& title = "trajectory");

}  // namespace magicvo::eval
