#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "eqm/dataset.hpp"
#include "eqm/hevc.hpp"
#include "eqm/pooling.hpp"
#include "eqm/rng.hpp"
#include "eqm/trace.hpp"

namespace eqm {

// One planted synthetic encode: a coherent global pan with a noise floor,
// per-block QP jitter, and a quality score driven by QP, motion, and the
// nominal rate of the ladder rung.
struct SynthVideoSpec {
  std::string video_id;
  int width = 0;
  int height = 0;
  double fps = 0.0;
  int n_frames = 0;
  int base_qp = 0;
  double motion = 0.0;        // target normalized MV length
  double mos = 0.0;
  double mos_clean = 0.0;
  double pixel_metric = 0.0;  // external full-reference proxy column
  std::uint64_t trace_seed = 0;
};

struct SynthConfig {
  std::size_t n_videos = 400;
  std::uint64_t seed = 0;
  int frames_min = 48;
  int frames_max = 96;
};

namespace detail {

// Full-scale widths keep the resolution normalization factor near 1 so
// quarter-pel rounding stays far below the planted motion; the short
// heights bound the per-frame block count.
inline constexpr std::array<std::pair<int, int>, 4> kSynthLadder = {{
    {1920, 192}, {2560, 256}, {3200, 320}, {3840, 384},
}};

inline constexpr std::array<double, 3> kSynthRates = {24.0, 30.0, 60.0};

// Closed-form expected rate of the size model below; keeps the planted MOS a
// function of (QP, motion, bitrate) without a circular dependency on the
// generated byte counts.
inline double nominal_bitrate_kbps(int width, int height, double fps, int qp) {
  const double pixels = static_cast<double>(width) * height;
  const double per_frame = pixels * 0.08 * std::exp2(-(qp - 16.0) / 5.0);
  const double gop_mix = (1.0 / 24.0) * 1.0 + (5.0 / 24.0) * 0.32 + (18.0 / 24.0) * 0.20;
  return per_frame * gop_mix * fps * 8.0 / 1000.0;
}

}  // namespace detail

inline std::vector<SynthVideoSpec> make_synth_specs(const SynthConfig& cfg) {
  std::vector<SynthVideoSpec> specs;
  specs.reserve(cfg.n_videos);
  Rng rng(derive_stream(cfg.seed, 1));
  for (std::size_t i = 0; i < cfg.n_videos; ++i) {
    SynthVideoSpec s;
    char name[32];
    std::snprintf(name, sizeof(name), "synth%04zu", i);
    s.video_id = name;
    const auto [w, h] = detail::kSynthLadder[rng.below(detail::kSynthLadder.size())];
    s.width = w;
    s.height = h;
    s.fps = detail::kSynthRates[rng.below(detail::kSynthRates.size())];
    s.n_frames = rng.uniform_int(cfg.frames_min, cfg.frames_max);
    s.base_qp = rng.uniform_int(16, 44);
    s.motion = std::clamp(std::exp(rng.normal(std::log(12.0), 0.8)), 2.0, 80.0);
    const double rate = detail::nominal_bitrate_kbps(s.width, s.height, s.fps, s.base_qp);
    const double difficulty = rng.normal(0.0, 2.5);
    s.mos_clean = 100.0 - 1.8 * (s.base_qp - 12.0) - 5.0 * std::log2(1.0 + s.motion / 2.0) +
                  1.2 * std::log2(rate / 300.0) + difficulty;
    s.mos = std::clamp(s.mos_clean + rng.normal(0.0, 2.0), 0.0, 100.0);
    s.pixel_metric = s.mos_clean + rng.normal(0.0, 1.0);
    s.trace_seed = derive_stream(cfg.seed, 1000 + i);
    specs.push_back(std::move(s));
  }
  return specs;
}

namespace detail {

struct SynthMv {
  double x = 0.0;
  double y = 0.0;
};

inline MotionVector quantize_mv(RefList list, int ref_poc, const SynthMv& mv) {
  return MotionVector{list, ref_poc, static_cast<int>(std::lround(mv.x)),
                      static_cast<int>(std::lround(mv.y))};
}

}  // namespace detail

inline std::vector<FrameRecord> make_synth_trace(const SynthVideoSpec& spec) {
  Rng rng(spec.trace_seed);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  // Pixel velocity per frame chosen so the normalized MV length lands on the
  // planted motion value for this rung and frame rate.
  const double velocity =
      spec.motion * (60.0 / spec.fps) * (spec.width / 3840.0) / 4.0;
  std::vector<FrameRecord> frames;
  frames.reserve(static_cast<std::size_t>(spec.n_frames));

  const auto displacement = [&](int gap, double sign) {
    const double len = 4.0 * velocity * gap;
    return detail::SynthMv{sign * len * std::cos(theta), -sign * len * std::sin(theta)};
  };

  for (int poc = 0; poc < spec.n_frames; ++poc) {
    FrameRecord f;
    f.poc = poc;
    f.width = spec.width;
    f.height = spec.height;
    f.frame_rate = spec.fps;
    const bool anchor = poc % 4 == 0;
    int ref_before = 0;
    int ref_after = -1;
    if (anchor) {
      f.frame_type = poc % 24 == 0 ? FrameType::i : FrameType::p;
      ref_before = poc - 4;
    } else {
      ref_before = poc - poc % 4;
      const int next_anchor = ref_before + 4;
      if (next_anchor < spec.n_frames) {
        f.frame_type = FrameType::b;
        ref_after = next_anchor;
      } else {
        f.frame_type = FrameType::p;
      }
    }

    double qp_weight = 0.0;
    double qp_area = 0.0;
    for (int cy = 0; cy < spec.height; cy += 64) {
      for (int cx = 0; cx < spec.width; cx += 64) {
        const double split = rng.uniform();
        const double deep = 0.25 + 0.012 * (44 - spec.base_qp);
        int cu = 64;
        if (split < deep) {
          cu = 16;
        } else if (split < deep + 0.45) {
          cu = 32;
        }
        for (int by = cy; by < cy + 64; by += cu) {
          for (int bx = cx; bx < cx + 64; bx += cu) {
            BlockRecord b;
            b.x = bx;
            b.y = by;
            b.w = cu;
            b.h = cu;
            b.cu_size = cu;
            double qp = spec.base_qp + rng.normal(0.0, 1.2);
            if (f.frame_type != FrameType::i) {
              const double p_skip = std::clamp(
                  0.15 + 0.012 * (spec.base_qp - 16) - 0.05 * std::log2(1.0 + spec.motion),
                  0.02, 0.9);
              if (rng.uniform() < p_skip) {
                b.skip = true;
              } else if (rng.uniform() < 0.05) {
                b.mvs.push_back(MotionVector{RefList::l0, ref_before, 0, 0});
              } else {
                const bool local = rng.uniform() < 0.15;
                if (local) qp += 1.5;
                const auto make_mv = [&](int ref, double sign) {
                  const int gap = std::abs(poc - ref);
                  detail::SynthMv mv = displacement(gap, sign);
                  if (local) {
                    // Length stays a bounded multiple of the pan so the pooled
                    // mean still tracks the planted motion.
                    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
                    const double len =
                        4.0 * velocity * (gap * rng.uniform(0.6, 1.8) + rng.uniform(0.5, 2.0));
                    mv = {len * std::cos(phi), -len * std::sin(phi)};
                  } else {
                    mv.x += rng.normal(0.0, 0.6);
                    mv.y += rng.normal(0.0, 0.6);
                  }
                  return mv;
                };
                if (f.frame_type == FrameType::b && rng.uniform() < 0.8) {
                  b.mvs.push_back(
                      detail::quantize_mv(RefList::l0, ref_before, make_mv(ref_before, -1.0)));
                  b.mvs.push_back(
                      detail::quantize_mv(RefList::l1, ref_after, make_mv(ref_after, 1.0)));
                } else {
                  const bool use_after = f.frame_type == FrameType::b && rng.bernoulli(0.5);
                  const int ref = use_after ? ref_after : ref_before;
                  b.mvs.push_back(detail::quantize_mv(use_after ? RefList::l1 : RefList::l0, ref,
                                                      make_mv(ref, use_after ? 1.0 : -1.0)));
                }
              }
            }
            b.qp = std::clamp(static_cast<int>(std::lround(qp)), 0, 51);
            qp_weight += b.area() * b.qp;
            qp_area += b.area();
            f.blocks.push_back(std::move(b));
          }
        }
      }
    }

    const double type_factor = f.frame_type == FrameType::i   ? 1.0
                               : f.frame_type == FrameType::p ? 0.32
                                                              : 0.20;
    const double frame_qp = qp_weight / qp_area;
    const double pixels = static_cast<double>(spec.width) * spec.height;
    const double size = pixels * 0.08 * std::exp2(-(frame_qp - 16.0) / 5.0) * type_factor *
                        std::exp(rng.normal(0.0, 0.1));
    f.frame_size = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(size)));
    frames.push_back(std::move(f));
  }
  return frames;
}

inline MetadataFeatures synth_metadata(const SynthVideoSpec& spec,
                                       std::span<const FrameRecord> frames) {
  MetadataFeatures meta;
  meta.resolution = static_cast<std::uint64_t>(spec.width) * static_cast<std::uint64_t>(spec.height);
  meta.frame_rate = spec.fps;
  meta.codec = Codec::h265;
  meta.chroma_format = ChromaFormat::c420;
  meta.bit_depth = 10;
  meta.full_range = false;
  std::int64_t bytes = 0;
  for (const FrameRecord& f : frames) bytes += f.frame_size;
  const double duration = static_cast<double>(frames.size()) / spec.fps;
  meta.bitrate_kbps = static_cast<double>(bytes) * 8.0 / duration / 1000.0;
  return meta;
}

inline constexpr const char* kPixelMetricColumn = "pixel_metric";

// Materializes the whole synthetic study in memory: canonical features plus
// the pixel-proxy external column, labeled with the planted MOS.
inline LabeledDataset build_synth_dataset(const SynthConfig& cfg, const NormConfig& norm = {}) {
  const std::vector<SynthVideoSpec> specs = make_synth_specs(cfg);
  LabeledDataset data;
  data.feature_names = standard_feature_columns();
  data.feature_names.emplace_back(kPixelMetricColumn);
  for (const SynthVideoSpec& spec : specs) {
    const std::vector<FrameRecord> frames = make_synth_trace(spec);
    const MetadataFeatures meta = synth_metadata(spec, frames);
    const std::vector<SegmentFeatures> segments = pool_trace(frames, meta, norm);
    std::vector<double> row = flatten_features(average_segments(segments));
    row.push_back(spec.pixel_metric);
    data.video_ids.push_back(spec.video_id);
    data.features.push_back(std::move(row));
    data.mos.push_back(spec.mos);
  }
  return data;
}

}  // namespace eqm
