#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqm/errors.hpp"
#include "eqm/frame_features.hpp"
#include "eqm/hevc.hpp"
#include "eqm/log.hpp"

namespace eqm {

// Canonical segment feature keys, frozen in this order for CSV columns and
// model schemas.
inline constexpr std::array<const char*, 23> kEqmFeatureKeys = {
    "mean_frameSize",
    "std_frameSize",
    "kurtosis_frameSize",
    "min_frameSize",
    "max_frameSize",
    "iqr_minQP",
    "std_maxQP",
    "mean_avgQP",
    "std_avgQP",
    "kurtosis_avgQP",
    "min_avgQP",
    "max_avgQP",
    "median_avgBlockDepth",
    "kurtosis_avgBlockDepth",
    "median_skipBlksRatio",
    "kurtosis_skipBlksRatio",
    "mean_stdDevMotion",
    "mean_avgMotion",
    "kurtosis_avgMotion",
    "std_avgQpLm",
    "mean_avgQpLocalMvDir",
    "max_avgQpLocalMvDir",
    "frame_count",
};

inline constexpr std::array<const char*, 5> kMetadataKeys = {
    "Resolution", "FrameRate", "Codec", "PixelFormat", "Bitrate",
};

inline std::size_t eqm_key_index(std::string_view key) {
  for (std::size_t i = 0; i < kEqmFeatureKeys.size(); ++i) {
    if (key == kEqmFeatureKeys[i]) return i;
  }
  raise("pooling.SchemaMismatch", "unknown feature key '" + std::string(key) + "'");
}

inline double metadata_value(const MetadataFeatures& meta, std::string_view key) {
  if (key == "Resolution") return static_cast<double>(meta.resolution);
  if (key == "FrameRate") return meta.frame_rate;
  if (key == "Codec") return meta.codec_code();
  if (key == "PixelFormat") return meta.pixel_format_code();
  if (key == "Bitrate") return meta.bitrate_kbps;
  raise("pooling.SchemaMismatch", "unknown metadata key '" + std::string(key) + "'");
}

// Segment-level feature vector: the canonical EQM keys plus the metadata
// record they were extracted with.
struct SegmentFeatures {
  std::array<double, kEqmFeatureKeys.size()> eqm{};
  MetadataFeatures meta;

  double& operator[](std::string_view key) { return eqm[eqm_key_index(key)]; }
  double operator[](std::string_view key) const { return eqm[eqm_key_index(key)]; }

  bool operator==(const SegmentFeatures&) const = default;
};

enum class PoolStat { mean, std_dev, kurtosis, min, max, median, iqr };

namespace detail {

inline double quantile_linear(std::span<const double> sorted, double p) {
  const double rank = (static_cast<double>(sorted.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline double pool_statistic(std::span<const double> values, PoolStat kind) {
  if (values.empty()) raise("pooling.EmptyInput", "cannot pool an empty value list");
  const double n = static_cast<double>(values.size());
  switch (kind) {
    case PoolStat::mean: {
      double s = 0.0;
      for (const double v : values) s += v;
      return s / n;
    }
    case PoolStat::std_dev: {
      const double m = pool_statistic(values, PoolStat::mean);
      double s = 0.0;
      for (const double v : values) s += (v - m) * (v - m);
      return std::sqrt(s / n);
    }
    case PoolStat::kurtosis: {
      const double m = pool_statistic(values, PoolStat::mean);
      double m2 = 0.0;
      double m4 = 0.0;
      for (const double v : values) {
        const double d = v - m;
        m2 += d * d;
        m4 += d * d * d * d;
      }
      m2 /= n;
      m4 /= n;
      if (m2 == 0.0) return 0.0;
      return m4 / (m2 * m2) - 3.0;
    }
    case PoolStat::min: return *std::min_element(values.begin(), values.end());
    case PoolStat::max: return *std::max_element(values.begin(), values.end());
    case PoolStat::median: {
      std::vector<double> sorted(values.begin(), values.end());
      std::sort(sorted.begin(), sorted.end());
      const std::size_t mid = sorted.size() / 2;
      if (sorted.size() % 2 == 1) return sorted[mid];
      return (sorted[mid - 1] + sorted[mid]) / 2.0;
    }
    case PoolStat::iqr: {
      std::vector<double> sorted(values.begin(), values.end());
      std::sort(sorted.begin(), sorted.end());
      return detail::quantile_linear(sorted, 0.75) - detail::quantile_linear(sorted, 0.25);
    }
  }
  raise("pooling.EmptyInput", "unknown pooling statistic");
}

namespace detail {

// Gathers one optional per-frame feature; pooling runs over the frames where
// it is present, and a feature absent everywhere pools to 0 with a warning.
template <typename Getter>
inline std::vector<double> present_values(std::span<const FrameFeatures> frames, Getter get) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const FrameFeatures& f : frames) {
    if (const std::optional<double> v = get(f)) out.push_back(*v);
  }
  return out;
}

inline double pool_or_zero(std::span<const double> values, PoolStat kind, const char* key) {
  if (values.empty()) {
    log::warn(std::string("segment feature ") + key + " absent in every frame; emitting 0");
    return 0.0;
  }
  return pool_statistic(values, kind);
}

}  // namespace detail

inline SegmentFeatures pool_segment(std::span<const FrameFeatures> frames,
                                    const MetadataFeatures& meta) {
  if (frames.empty()) raise("pooling.EmptyInput", "cannot pool an empty segment");
  SegmentFeatures seg;
  seg.meta = meta;

  std::vector<double> frame_size;
  std::vector<double> min_qp;
  std::vector<double> max_qp;
  std::vector<double> avg_qp;
  std::vector<double> depth;
  frame_size.reserve(frames.size());
  min_qp.reserve(frames.size());
  max_qp.reserve(frames.size());
  avg_qp.reserve(frames.size());
  depth.reserve(frames.size());
  for (const FrameFeatures& f : frames) {
    frame_size.push_back(static_cast<double>(f.frame_size));
    min_qp.push_back(static_cast<double>(f.min_qp));
    max_qp.push_back(static_cast<double>(f.max_qp));
    avg_qp.push_back(f.avg_qp);
    depth.push_back(f.avg_block_depth);
  }
  const auto skip = detail::present_values(frames, [](const FrameFeatures& f) { return f.skip_ratio; });
  const auto motion = detail::present_values(frames, [](const FrameFeatures& f) { return f.avg_motion; });
  const auto motion_std =
      detail::present_values(frames, [](const FrameFeatures& f) { return f.stddev_motion; });
  const auto qp_lm = detail::present_values(frames, [](const FrameFeatures& f) { return f.avg_qp_lm; });
  const auto qp_local =
      detail::present_values(frames, [](const FrameFeatures& f) { return f.avg_qp_local_mv_dir; });

  seg["mean_frameSize"] = pool_statistic(frame_size, PoolStat::mean);
  seg["std_frameSize"] = pool_statistic(frame_size, PoolStat::std_dev);
  seg["kurtosis_frameSize"] = pool_statistic(frame_size, PoolStat::kurtosis);
  seg["min_frameSize"] = pool_statistic(frame_size, PoolStat::min);
  seg["max_frameSize"] = pool_statistic(frame_size, PoolStat::max);
  seg["iqr_minQP"] = pool_statistic(min_qp, PoolStat::iqr);
  seg["std_maxQP"] = pool_statistic(max_qp, PoolStat::std_dev);
  seg["mean_avgQP"] = pool_statistic(avg_qp, PoolStat::mean);
  seg["std_avgQP"] = pool_statistic(avg_qp, PoolStat::std_dev);
  seg["kurtosis_avgQP"] = pool_statistic(avg_qp, PoolStat::kurtosis);
  seg["min_avgQP"] = pool_statistic(avg_qp, PoolStat::min);
  seg["max_avgQP"] = pool_statistic(avg_qp, PoolStat::max);
  seg["median_avgBlockDepth"] = pool_statistic(depth, PoolStat::median);
  seg["kurtosis_avgBlockDepth"] = pool_statistic(depth, PoolStat::kurtosis);
  seg["median_skipBlksRatio"] = detail::pool_or_zero(skip, PoolStat::median, "median_skipBlksRatio");
  seg["kurtosis_skipBlksRatio"] =
      detail::pool_or_zero(skip, PoolStat::kurtosis, "kurtosis_skipBlksRatio");
  seg["mean_stdDevMotion"] = detail::pool_or_zero(motion_std, PoolStat::mean, "mean_stdDevMotion");
  seg["mean_avgMotion"] = detail::pool_or_zero(motion, PoolStat::mean, "mean_avgMotion");
  seg["kurtosis_avgMotion"] = detail::pool_or_zero(motion, PoolStat::kurtosis, "kurtosis_avgMotion");
  seg["std_avgQpLm"] = detail::pool_or_zero(qp_lm, PoolStat::std_dev, "std_avgQpLm");
  seg["mean_avgQpLocalMvDir"] =
      detail::pool_or_zero(qp_local, PoolStat::mean, "mean_avgQpLocalMvDir");
  seg["max_avgQpLocalMvDir"] = detail::pool_or_zero(qp_local, PoolStat::max, "max_avgQpLocalMvDir");
  seg["frame_count"] = static_cast<double>(frames.size());
  return seg;
}

// Splits a trace into fixed-length segments (0 = one segment spanning the
// whole trace), extracts per-frame features, and pools each segment.
inline std::vector<SegmentFeatures> pool_trace(std::span<const FrameRecord> frames,
                                               const MetadataFeatures& meta,
                                               const NormConfig& cfg,
                                               std::size_t segment_length = 0) {
  if (frames.empty()) raise("pooling.EmptyInput", "trace has no frames");
  std::vector<FrameFeatures> features;
  features.reserve(frames.size());
  for (const FrameRecord& f : frames) features.push_back(extract_frame_features(f, cfg));
  const std::size_t step = segment_length == 0 ? features.size() : segment_length;
  std::vector<SegmentFeatures> segments;
  for (std::size_t begin = 0; begin < features.size(); begin += step) {
    const std::size_t end = std::min(begin + step, features.size());
    segments.push_back(pool_segment(
        std::span<const FrameFeatures>(features.data() + begin, end - begin), meta));
  }
  return segments;
}

// Per-key arithmetic mean across segments of one video; frame_count sums.
inline SegmentFeatures average_segments(std::span<const SegmentFeatures> segments) {
  if (segments.empty()) raise("pooling.EmptyInput", "cannot average an empty segment list");
  for (const SegmentFeatures& s : segments) {
    if (!(s.meta == segments.front().meta)) {
      raise("pooling.SchemaMismatch", "segments carry different metadata records");
    }
  }
  SegmentFeatures out;
  out.meta = segments.front().meta;
  for (std::size_t k = 0; k < kEqmFeatureKeys.size(); ++k) {
    double s = 0.0;
    for (const SegmentFeatures& seg : segments) s += seg.eqm[k];
    out.eqm[k] = s / static_cast<double>(segments.size());
  }
  out["frame_count"] = 0.0;
  for (const SegmentFeatures& seg : segments) out["frame_count"] += seg["frame_count"];
  return out;
}

}  // namespace eqm
