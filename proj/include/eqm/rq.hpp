#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eqm/dataset.hpp"
#include "eqm/errors.hpp"

namespace eqm {

struct RqPoint {
  double bitrate = 0.0;
  double resolution = 0.0;
  double score = 0.0;
};

// One score curve over bitrate at a fixed resolution; knots ascend in bitrate
// and duplicate bitrates are averaged so linear interpolation is well defined.
struct RqCurve {
  double resolution = 0.0;
  std::vector<std::pair<double, double>> knots;  // (bitrate, score)
};

struct RqCrossover {
  double resolution_a = 0.0;  // the lower resolution of the pair
  double resolution_b = 0.0;
  double bitrate = 0.0;
  double score = 0.0;
};

// Joins per-video scores onto the feature table's Bitrate/Resolution columns.
inline std::vector<RqPoint> build_rq_points(const FeatureTable& table,
                                            std::span<const MosEntry> scores) {
  if (table.video_ids.empty()) raise("rq.EmptyInput", "feature table has no rows");
  const std::size_t bitrate_col = table.column_index("Bitrate");
  const std::size_t resolution_col = table.column_index("Resolution");
  std::unordered_map<std::string, double> by_id;
  for (const MosEntry& s : scores) by_id[s.video_id] = s.mos;
  std::vector<RqPoint> points;
  points.reserve(table.video_ids.size());
  for (std::size_t r = 0; r < table.video_ids.size(); ++r) {
    const auto it = by_id.find(table.video_ids[r]);
    if (it == by_id.end()) {
      raise("rq.MissingScore", "no score for video '" + table.video_ids[r] + "'");
    }
    points.push_back({table.values[r][bitrate_col], table.values[r][resolution_col], it->second});
  }
  std::sort(points.begin(), points.end(), [](const RqPoint& a, const RqPoint& b) {
    if (a.resolution != b.resolution) return a.resolution < b.resolution;
    if (a.bitrate != b.bitrate) return a.bitrate < b.bitrate;
    return a.score < b.score;
  });
  return points;
}

inline std::vector<RqCurve> build_rq_curves(std::span<const RqPoint> points) {
  std::map<double, std::map<double, std::pair<double, std::size_t>>> grouped;
  for (const RqPoint& p : points) {
    auto& cell = grouped[p.resolution][p.bitrate];
    cell.first += p.score;
    cell.second += 1;
  }
  std::vector<RqCurve> curves;
  curves.reserve(grouped.size());
  for (const auto& [resolution, by_bitrate] : grouped) {
    RqCurve curve;
    curve.resolution = resolution;
    for (const auto& [bitrate, cell] : by_bitrate) {
      curve.knots.emplace_back(bitrate, cell.first / static_cast<double>(cell.second));
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

namespace detail {

inline double interpolate_curve(const RqCurve& curve, double bitrate) {
  const auto& k = curve.knots;
  auto hi = std::lower_bound(k.begin(), k.end(), bitrate,
                             [](const auto& knot, double x) { return knot.first < x; });
  if (hi == k.begin()) return hi->second;
  if (hi == k.end()) return k.back().second;
  const auto lo = hi - 1;
  const double span = hi->first - lo->first;
  if (span <= 0.0) return lo->second;
  const double t = (bitrate - lo->first) / span;
  return lo->second + t * (hi->second - lo->second);
}

}  // namespace detail

// Intersections between every pair of per-resolution curves over their shared
// bitrate range. A sign change of the score difference between adjacent
// breakpoints yields the linearly interpolated crossover bitrate.
inline std::vector<RqCrossover> find_rq_crossovers(std::span<const RqCurve> curves) {
  std::vector<RqCrossover> out;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t j = i + 1; j < curves.size(); ++j) {
      const RqCurve& a = curves[i];
      const RqCurve& b = curves[j];
      if (a.knots.size() < 2 || b.knots.size() < 2) continue;
      const double lo = std::max(a.knots.front().first, b.knots.front().first);
      const double hi = std::min(a.knots.back().first, b.knots.back().first);
      if (!(lo < hi)) continue;
      std::vector<double> xs;
      for (const auto& [x, y] : a.knots) {
        if (x >= lo && x <= hi) xs.push_back(x);
      }
      for (const auto& [x, y] : b.knots) {
        if (x >= lo && x <= hi) xs.push_back(x);
      }
      xs.push_back(lo);
      xs.push_back(hi);
      std::sort(xs.begin(), xs.end());
      xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      double last_recorded = -1.0;
      auto record = [&](double x) {
        if (!out.empty() && out.back().resolution_a == a.resolution &&
            out.back().resolution_b == b.resolution && x == last_recorded) {
          return;
        }
        out.push_back({a.resolution, b.resolution, x, detail::interpolate_curve(a, x)});
        last_recorded = x;
      };
      for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
        const double d0 = detail::interpolate_curve(a, xs[k]) - detail::interpolate_curve(b, xs[k]);
        const double d1 =
            detail::interpolate_curve(a, xs[k + 1]) - detail::interpolate_curve(b, xs[k + 1]);
        if (d0 == 0.0) {
          record(xs[k]);
        } else if (d0 * d1 < 0.0) {
          const double t = d0 / (d0 - d1);
          record(xs[k] + t * (xs[k + 1] - xs[k]));
        }
      }
      if (detail::interpolate_curve(a, xs.back()) == detail::interpolate_curve(b, xs.back())) {
        record(xs.back());
      }
    }
  }
  return out;
}

}  // namespace eqm
