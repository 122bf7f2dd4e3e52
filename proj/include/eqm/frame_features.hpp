#pragma once

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqm/errors.hpp"
#include "eqm/trace.hpp"

namespace eqm {

// Per-frame feature tuple before temporal pooling. Motion and angle fields
// are absent for I frames and for frames without MV-bearing blocks.
struct FrameFeatures {
  FrameType frame_type = FrameType::i;
  std::int64_t frame_size = 0;
  int min_qp = 0;
  int max_qp = 0;
  double avg_qp = 0.0;
  double avg_block_depth = 0.0;
  std::optional<double> skip_ratio;           // absent for I frames
  std::optional<double> avg_motion;           // normalized quarter-pel units
  std::optional<double> stddev_motion;
  std::optional<double> avg_qp_lm;
  std::optional<double> avg_qp_local_mv_dir;
  std::optional<double> mv_global_angle;      // degrees, diagnostic
  bool mv_global_angle_degenerate = false;
};

// Bin d covers [d, d+1) degrees; counts are area weights in 4x4 units, so a
// two-MV block splits its weight across both directions.
struct AngleHistogram {
  std::array<double, 360> bins{};
  double total = 0.0;
};

struct AnglePartition {
  std::vector<int> global_bins;
  std::vector<int> local_bins;
};

struct GlobalAngle {
  double degrees = 0.0;
  bool degenerate = false;
};

inline double normalized_mv_length(const MotionVector& mv, const FrameRecord& frame,
                                   const NormConfig& cfg) {
  if (mv.ref_poc == frame.poc) {
    raise("features.ZeroRefDistance",
          "motion vector references its own frame (poc " + std::to_string(frame.poc) + ")");
  }
  const double f_res = cfg.max_frame_width / frame.width;
  const double f_fr = frame.frame_rate / cfg.max_frame_rate;
  const double n = 1.0 / std::abs(static_cast<double>(frame.poc) - mv.ref_poc);
  const double len = std::sqrt(static_cast<double>(mv.mv_x) * mv.mv_x +
                               static_cast<double>(mv.mv_y) * mv.mv_y);
  return f_fr * f_res * n * len;
}

namespace detail {

// Per-block normalized length: single MV uses its own length, a two-MV block
// averages the two per-reference-normalized lengths.
inline std::optional<double> block_normalized_length(const BlockRecord& b,
                                                     const FrameRecord& frame,
                                                     const NormConfig& cfg) {
  if (b.mvs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const MotionVector& mv : b.mvs) sum += normalized_mv_length(mv, frame, cfg);
  return sum / static_cast<double>(b.mvs.size());
}

inline double angle_degrees(const MotionVector& mv) {
  // Trace MVs are raster y-down; negating y gives mathematical y-up angles,
  // 0 degrees = rightward motion.
  const double rad = std::atan2(-static_cast<double>(mv.mv_y), static_cast<double>(mv.mv_x));
  double deg = rad * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return deg < 360.0 ? deg : 0.0;
}

inline int angle_bin(const MotionVector& mv) {
  const int bin = static_cast<int>(angle_degrees(mv));
  return std::clamp(bin, 0, 359);
}

}  // namespace detail

struct MotionStats {
  std::optional<double> avg_motion;
  std::optional<double> stddev_motion;
};

// Area-weighted mean and population standard deviation of per-block
// normalized MV lengths; blocks without MVs contribute nothing.
inline MotionStats frame_motion_stats(const FrameRecord& frame, const NormConfig& cfg) {
  double weight_sum = 0.0;
  double value_sum = 0.0;
  std::vector<std::pair<double, double>> samples;  // (weight, length)
  samples.reserve(frame.blocks.size());
  for (const BlockRecord& b : frame.blocks) {
    const std::optional<double> len = detail::block_normalized_length(b, frame, cfg);
    if (!len) continue;
    const double w = b.area() / 16.0;
    samples.emplace_back(w, *len);
    weight_sum += w;
    value_sum += w * *len;
  }
  if (weight_sum <= 0.0) return {};
  const double mean = value_sum / weight_sum;
  double var_sum = 0.0;
  for (const auto& [w, len] : samples) var_sum += w * (len - mean) * (len - mean);
  return {mean, std::sqrt(var_sum / weight_sum)};
}

inline AngleHistogram mv_angle_histogram(const FrameRecord& frame) {
  AngleHistogram h;
  for (const BlockRecord& b : frame.blocks) {
    if (b.mvs.empty()) continue;
    const double per_mv_weight = b.area() / 16.0 / static_cast<double>(b.mvs.size());
    for (const MotionVector& mv : b.mvs) {
      if (mv.mv_x == 0 && mv.mv_y == 0) continue;  // undefined direction
      h.bins[detail::angle_bin(mv)] += per_mv_weight;
      h.total += per_mv_weight;
    }
  }
  return h;
}

// Minimal prefix of bins, ordered by count descending (ties: lower index
// first), whose cumulative count reaches threshold * total; the remaining
// nonzero bins are local. Empty histogram yields two empty sets.
inline AnglePartition partition_global_local(const AngleHistogram& h, double threshold) {
  AnglePartition out;
  if (h.total <= 0.0) return out;
  std::vector<int> order;
  order.reserve(360);
  for (int d = 0; d < 360; ++d) {
    if (h.bins[d] > 0.0) order.push_back(d);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&h](int a, int b) { return h.bins[a] > h.bins[b]; });
  const double target = threshold * h.total - 1e-9 * h.total;
  double cum = 0.0;
  std::size_t taken = 0;
  while (taken < order.size() && cum < target) {
    cum += h.bins[order[taken]];
    ++taken;
  }
  out.global_bins.assign(order.begin(), order.begin() + taken);
  out.local_bins.assign(order.begin() + taken, order.end());
  std::sort(out.global_bins.begin(), out.global_bins.end());
  std::sort(out.local_bins.begin(), out.local_bins.end());
  return out;
}

// Vector-sum direction of the global bins, using bin centers d + 0.5. A
// near-zero resultant is degenerate and reported as 0 degrees with a flag.
inline GlobalAngle global_angle(const AngleHistogram& h, std::span<const int> global_bins) {
  double total = 0.0;
  double x = 0.0;
  double y = 0.0;
  for (const int d : global_bins) {
    const double c = h.bins[d];
    const double rad = (d + 0.5) * std::numbers::pi / 180.0;
    x += c * std::cos(rad);
    y += c * std::sin(rad);
    total += c;
  }
  if (global_bins.empty() || total <= 0.0) {
    raise("features.EmptyGlobalSet", "global bin set is empty or has zero count");
  }
  if (std::sqrt(x * x + y * y) <= 1e-9 * total) return {0.0, true};
  double deg = std::atan2(y, x) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return {deg < 360.0 ? deg : 0.0, false};
}

// Area-weighted mean QP over MV-bearing blocks with any MV direction in a
// local bin; absent when no block qualifies.
inline std::optional<double> avg_qp_local_mv_dir(const FrameRecord& frame,
                                                 std::span<const int> local_bins) {
  std::bitset<360> local;
  for (const int d : local_bins) local.set(static_cast<std::size_t>(d));
  double weight_sum = 0.0;
  double qp_sum = 0.0;
  for (const BlockRecord& b : frame.blocks) {
    bool is_local = false;
    for (const MotionVector& mv : b.mvs) {
      if (mv.mv_x == 0 && mv.mv_y == 0) continue;
      is_local = is_local || local.test(static_cast<std::size_t>(detail::angle_bin(mv)));
    }
    if (!is_local) continue;
    weight_sum += b.area();
    qp_sum += b.area() * b.qp;
  }
  if (weight_sum <= 0.0) return std::nullopt;
  return qp_sum / weight_sum;
}

// Area-weighted mean QP over low-motion blocks: skip blocks qualify
// unconditionally, MV-bearing blocks qualify below tau; blocks with neither
// skip nor MVs are excluded.
inline std::optional<double> avg_qp_low_motion(const FrameRecord& frame, const NormConfig& cfg) {
  double weight_sum = 0.0;
  double qp_sum = 0.0;
  for (const BlockRecord& b : frame.blocks) {
    bool low = b.skip;
    if (!low) {
      const std::optional<double> len = detail::block_normalized_length(b, frame, cfg);
      low = len.has_value() && *len < cfg.low_motion_tau;
    }
    if (!low) continue;
    weight_sum += b.area();
    qp_sum += b.area() * b.qp;
  }
  if (weight_sum <= 0.0) return std::nullopt;
  return qp_sum / weight_sum;
}

struct ScalarStats {
  int min_qp = 0;
  int max_qp = 0;
  double avg_qp = 0.0;
  double avg_block_depth = 0.0;
  std::optional<double> skip_ratio;  // absent for I frames
};

inline ScalarStats frame_scalar_stats(const FrameRecord& frame) {
  if (frame.blocks.empty()) raise("features.EmptyInput", "frame has no blocks");
  ScalarStats s;
  s.min_qp = frame.blocks.front().qp;
  s.max_qp = frame.blocks.front().qp;
  double area_sum = 0.0;
  double qp_sum = 0.0;
  double depth_sum = 0.0;
  double skip_area = 0.0;
  for (const BlockRecord& b : frame.blocks) {
    s.min_qp = std::min(s.min_qp, b.qp);
    s.max_qp = std::max(s.max_qp, b.qp);
    area_sum += b.area();
    qp_sum += b.area() * b.qp;
    depth_sum += b.area() * std::log2(static_cast<double>(b.cu_size));
    if (b.skip) skip_area += b.area();
  }
  s.avg_qp = qp_sum / area_sum;
  s.avg_block_depth = depth_sum / area_sum;
  if (frame.frame_type != FrameType::i) s.skip_ratio = skip_area / area_sum;
  return s;
}

inline FrameFeatures extract_frame_features(const FrameRecord& frame, const NormConfig& cfg) {
  FrameFeatures f;
  f.frame_type = frame.frame_type;
  f.frame_size = frame.frame_size;
  const ScalarStats s = frame_scalar_stats(frame);
  f.min_qp = s.min_qp;
  f.max_qp = s.max_qp;
  f.avg_qp = s.avg_qp;
  f.avg_block_depth = s.avg_block_depth;
  f.skip_ratio = s.skip_ratio;
  if (frame.frame_type == FrameType::i) return f;
  const MotionStats motion = frame_motion_stats(frame, cfg);
  f.avg_motion = motion.avg_motion;
  f.stddev_motion = motion.stddev_motion;
  f.avg_qp_lm = avg_qp_low_motion(frame, cfg);
  const AngleHistogram h = mv_angle_histogram(frame);
  const AnglePartition part = partition_global_local(h, cfg.global_threshold);
  if (!part.global_bins.empty()) {
    const GlobalAngle g = global_angle(h, part.global_bins);
    f.mv_global_angle = g.degrees;
    f.mv_global_angle_degenerate = g.degenerate;
  }
  f.avg_qp_local_mv_dir = avg_qp_local_mv_dir(frame, part.local_bins);
  return f;
}

}  // namespace eqm
