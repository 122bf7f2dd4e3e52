#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqm/bitio.hpp"
#include "eqm/errors.hpp"
#include "eqm/log.hpp"
#include "eqm/textio.hpp"

namespace eqm {

enum class ChromaFormat { mono = 0, c420 = 1, c422 = 2, c444 = 3 };

enum class Codec { h265 = 0 };

inline constexpr int kNalTypeSps = 33;

// One Annex-B NAL unit. `payload` has emulation-prevention bytes removed;
// `start_code_zeros` is the number of 0x00 bytes preceding the 0x01 of this
// unit's start code (>= 2), so a split stream can be re-emitted byte-exactly.
struct NalUnit {
  int nal_type = 0;
  std::vector<std::uint8_t> payload;
  int start_code_zeros = 2;

  bool operator==(const NalUnit&) const = default;
};

struct SpsInfo {
  std::uint32_t width_luma = 0;   // conformance-cropped
  std::uint32_t height_luma = 0;  // conformance-cropped
  int bit_depth_luma = 8;
  ChromaFormat chroma_format = ChromaFormat::c420;
  std::optional<double> frame_rate;  // from VUI timing when present
  std::optional<bool> full_range;    // from VUI video signal type when present

  bool operator==(const SpsInfo&) const = default;
};

// Video-level metadata feature record (CLI `probe` output). The categorical
// fields keep their components so both the display string and the frozen
// numeric codes can be derived.
struct MetadataFeatures {
  std::uint64_t resolution = 0;  // width x height in luma pixels
  double frame_rate = 0.0;
  Codec codec = Codec::h265;
  ChromaFormat chroma_format = ChromaFormat::c420;
  int bit_depth = 8;
  bool full_range = false;
  double bitrate_kbps = 0.0;

  std::string pixel_format() const;
  // Frozen categorical dictionary used by the feature CSV and the model:
  //   codec:        h265 -> 0 (h264 -> 1 reserved)
  //   pixel_format: chroma_index * 1000 + bit_depth * 2 + full_range
  // with chroma_index mono=0, 4:2:0=1, 4:2:2=2, 4:4:4=3.
  double codec_code() const { return static_cast<double>(codec); }
  double pixel_format_code() const {
    return static_cast<double>(chroma_format) * 1000.0 + bit_depth * 2.0 +
           (full_range ? 1.0 : 0.0);
  }

  bool operator==(const MetadataFeatures&) const = default;
};

inline std::string MetadataFeatures::pixel_format() const {
  std::string name;
  switch (chroma_format) {
    case ChromaFormat::mono: name = "gray"; break;
    case ChromaFormat::c420: name = "yuv420p"; break;
    case ChromaFormat::c422: name = "yuv422p"; break;
    case ChromaFormat::c444: name = "yuv444p"; break;
  }
  if (bit_depth > 8) name += std::to_string(bit_depth) + "le";
  if (full_range) name += "_full";
  return name;
}

inline const char* codec_name(Codec c) {
  switch (c) {
    case Codec::h265: return "h265";
  }
  return "unknown";
}

// --- emulation prevention ------------------------------------------------

// Removes emulation_prevention_three_byte: every 00 00 03 triple drops the
// 03, including a trailing one (cabac_zero_word spelling).
inline std::vector<std::uint8_t> unescape_payload(std::span<const std::uint8_t> data) {
  std::vector<std::uint8_t> out;
  out.reserve(data.size());
  std::size_t zeros = 0;
  for (const std::uint8_t b : data) {
    if (zeros >= 2 && b == 0x03) {
      zeros = 0;
      continue;  // drop the escape byte
    }
    out.push_back(b);
    zeros = (b == 0x00) ? zeros + 1 : 0;
  }
  return out;
}

// Inverse of unescape_payload: inserts 03 after any 00 00 pair followed by a
// byte <= 03, and after a trailing 00 00 so the escaped form never ends in
// two zeros.
inline std::vector<std::uint8_t> escape_payload(std::span<const std::uint8_t> raw) {
  std::vector<std::uint8_t> out;
  out.reserve(raw.size() + raw.size() / 64 + 4);
  std::size_t zeros = 0;
  for (const std::uint8_t b : raw) {
    if (zeros >= 2 && b <= 0x03) {
      out.push_back(0x03);
      zeros = 0;
    }
    out.push_back(b);
    zeros = (b == 0x00) ? zeros + 1 : 0;
  }
  if (zeros >= 2) out.push_back(0x03);
  return out;
}

// --- NAL unit framing -----------------------------------------------------

// Splits an Annex-B elementary stream into NAL units. Trailing zero bytes in
// front of a start code are treated as that start code's leading zeros, the
// usual resolution of the Annex-B framing ambiguity. Concatenating, for each
// unit, start_code_zeros 0x00 bytes + 0x01 + escape_payload(payload)
// reproduces the input exactly.
inline std::vector<NalUnit> split_nal_units(std::span<const std::uint8_t> stream) {
  if (stream.empty()) raise("hevc.NoStartCode", "empty stream");

  // Find every start code: a run of >= 2 zeros followed by 0x01.
  struct StartCode {
    std::size_t payload_begin;  // byte after the 0x01
    std::size_t zeros_begin;    // first 0x00 of the run
    int zeros;
  };
  std::vector<StartCode> codes;
  std::size_t run_start = 0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const std::uint8_t b = stream[i];
    if (b == 0x00) {
      if (zeros == 0) run_start = i;
      ++zeros;
    } else {
      if (b == 0x01 && zeros >= 2) {
        codes.push_back({i + 1, run_start, static_cast<int>(zeros)});
      }
      zeros = 0;
    }
  }
  if (codes.empty()) raise("hevc.NoStartCode", "no Annex-B start code found");
  if (codes.front().zeros_begin != 0) {
    raise("hevc.LeadingGarbage", "data before the first start code");
  }

  std::vector<NalUnit> units;
  units.reserve(codes.size());
  for (std::size_t k = 0; k < codes.size(); ++k) {
    const std::size_t begin = codes[k].payload_begin;
    const std::size_t end = (k + 1 < codes.size()) ? codes[k + 1].zeros_begin : stream.size();
    if (begin >= end) raise("hevc.TruncatedUnit", "empty NAL unit payload");
    NalUnit unit;
    unit.start_code_zeros = codes[k].zeros;
    unit.payload = unescape_payload(stream.subspan(begin, end - begin));
    if (unit.payload.empty()) raise("hevc.TruncatedUnit", "empty NAL unit payload");
    unit.nal_type = (unit.payload[0] >> 1) & 0x3F;
    units.push_back(std::move(unit));
  }
  return units;
}

// Re-emits a split stream byte-exactly (round-trip check / test support).
inline std::vector<std::uint8_t> assemble_nal_units(std::span<const NalUnit> units) {
  std::vector<std::uint8_t> out;
  for (const NalUnit& u : units) {
    out.insert(out.end(), static_cast<std::size_t>(u.start_code_zeros), 0x00);
    out.push_back(0x01);
    const auto escaped = escape_payload(u.payload);
    out.insert(out.end(), escaped.begin(), escaped.end());
  }
  return out;
}

// --- SPS parsing ----------------------------------------------------------

namespace detail {

inline void parse_profile_tier_level(BitReader& br, int max_sub_layers_minus1) {
  br.skip(2 + 1 + 5);  // profile_space, tier_flag, profile_idc
  br.skip(32);         // profile_compatibility_flags
  br.skip(4);          // progressive/interlaced/non_packed/frame_only
  br.skip(44);         // reserved
  br.skip(8);          // level_idc
  std::vector<bool> profile_present, level_present;
  for (int i = 0; i < max_sub_layers_minus1; ++i) {
    profile_present.push_back(br.bit() != 0);
    level_present.push_back(br.bit() != 0);
  }
  if (max_sub_layers_minus1 > 0) {
    for (int i = max_sub_layers_minus1; i < 8; ++i) br.skip(2);
  }
  for (int i = 0; i < max_sub_layers_minus1; ++i) {
    if (profile_present[static_cast<std::size_t>(i)]) br.skip(2 + 1 + 5 + 32 + 4 + 44);
    if (level_present[static_cast<std::size_t>(i)]) br.skip(8);
  }
}

inline void parse_scaling_list_data(BitReader& br) {
  for (int size_id = 0; size_id < 4; ++size_id) {
    for (int matrix_id = 0; matrix_id < 6; matrix_id += (size_id == 3) ? 3 : 1) {
      if (br.bit() == 0) {          // scaling_list_pred_mode_flag
        br.ue();                    // scaling_list_pred_matrix_id_delta
      } else {
        if (size_id > 1) br.se();   // scaling_list_dc_coef_minus8
        const int coef_num = std::min(64, 1 << (4 + (size_id << 1)));
        for (int i = 0; i < coef_num; ++i) br.se();  // scaling_list_delta_coef
      }
    }
  }
}

// Traverses one st_ref_pic_set and returns its NumDeltaPocs. Predicted sets
// derive their size from the number of inherited deltas.
inline std::uint64_t parse_st_ref_pic_set(BitReader& br, std::uint64_t idx,
                                          const std::vector<std::uint64_t>& num_delta_pocs) {
  bool predicted = false;
  if (idx != 0) predicted = br.bit() != 0;  // inter_ref_pic_set_prediction_flag
  if (predicted) {
    // Inside an SPS the reference is always the previous set.
    if (idx == 0 || num_delta_pocs.empty()) {
      raise("hevc.MalformedSps", "predicted ref pic set without a reference");
    }
    const std::uint64_t ref_deltas = num_delta_pocs[static_cast<std::size_t>(idx - 1)];
    br.bit();  // delta_rps_sign
    br.ue();   // abs_delta_rps_minus1
    std::uint64_t kept = 0;
    for (std::uint64_t j = 0; j <= ref_deltas; ++j) {
      const bool used = br.bit() != 0;  // used_by_curr_pic_flag
      bool use_delta = true;
      if (!used) use_delta = br.bit() != 0;  // use_delta_flag
      if (used || use_delta) ++kept;
    }
    return kept;
  }
  const std::uint64_t num_negative = br.ue();
  const std::uint64_t num_positive = br.ue();
  if (num_negative + num_positive > 64) {
    raise("hevc.MalformedSps", "implausible ref pic set size");
  }
  for (std::uint64_t i = 0; i < num_negative + num_positive; ++i) {
    br.ue();   // delta_poc_minus1
    br.bit();  // used_by_curr_pic_flag
  }
  return num_negative + num_positive;
}

}  // namespace detail

// Decodes the SPS fields behind Table-1 metadata: resolution (conformance
// cropped), luma bit depth, chroma format, and the optional VUI video range
// and timing. Syntax after the VUI timing info is not needed and not read.
inline SpsInfo parse_sps(const NalUnit& unit) {
  if (unit.nal_type != kNalTypeSps) {
    raise("hevc.MalformedSps", "NAL type " + std::to_string(unit.nal_type) + " is not an SPS");
  }
  try {
    BitReader br(std::span<const std::uint8_t>(unit.payload).subspan(2));  // 2-byte NAL header

    br.skip(4);  // sps_video_parameter_set_id
    const int max_sub_layers_minus1 = static_cast<int>(br.bits(3));
    if (max_sub_layers_minus1 > 6) raise("hevc.MalformedSps", "sps_max_sub_layers_minus1 > 6");
    br.bit();  // sps_temporal_id_nesting_flag
    detail::parse_profile_tier_level(br, max_sub_layers_minus1);

    br.ue();  // sps_seq_parameter_set_id
    const std::uint64_t chroma_format_idc = br.ue();
    if (chroma_format_idc > 3) raise("hevc.MalformedSps", "chroma_format_idc out of range");
    if (chroma_format_idc == 3) br.bit();  // separate_colour_plane_flag

    const std::uint64_t pic_width = br.ue();
    const std::uint64_t pic_height = br.ue();
    if (pic_width == 0 || pic_height == 0 || pic_width > 65536 || pic_height > 65536) {
      raise("hevc.MalformedSps", "picture dimensions out of range");
    }

    std::uint64_t crop_left = 0, crop_right = 0, crop_top = 0, crop_bottom = 0;
    if (br.bit() != 0) {  // conformance_window_flag
      crop_left = br.ue();
      crop_right = br.ue();
      crop_top = br.ue();
      crop_bottom = br.ue();
    }

    const std::uint64_t bit_depth_luma_minus8 = br.ue();
    br.ue();  // bit_depth_chroma_minus8
    if (bit_depth_luma_minus8 > 8) raise("hevc.MalformedSps", "bit_depth_luma out of range");

    const std::uint64_t log2_max_poc_lsb_minus4 = br.ue();
    if (log2_max_poc_lsb_minus4 > 12) raise("hevc.MalformedSps", "log2_max_pic_order_cnt_lsb out of range");
    const bool sub_layer_ordering_info = br.bit() != 0;
    const int ordering_first = sub_layer_ordering_info ? 0 : max_sub_layers_minus1;
    for (int i = ordering_first; i <= max_sub_layers_minus1; ++i) {
      br.ue();  // sps_max_dec_pic_buffering_minus1
      br.ue();  // sps_max_num_reorder_pics
      br.ue();  // sps_max_latency_increase_plus1
    }

    br.ue();  // log2_min_luma_coding_block_size_minus3
    br.ue();  // log2_diff_max_min_luma_coding_block_size
    br.ue();  // log2_min_luma_transform_block_size_minus2
    br.ue();  // log2_diff_max_min_luma_transform_block_size
    br.ue();  // max_transform_hierarchy_depth_inter
    br.ue();  // max_transform_hierarchy_depth_intra

    if (br.bit() != 0) {           // scaling_list_enabled_flag
      if (br.bit() != 0) {         // sps_scaling_list_data_present_flag
        detail::parse_scaling_list_data(br);
      }
    }

    br.bit();  // amp_enabled_flag
    br.bit();  // sample_adaptive_offset_enabled_flag
    if (br.bit() != 0) {  // pcm_enabled_flag
      br.skip(4);         // pcm_sample_bit_depth_luma_minus1
      br.skip(4);         // pcm_sample_bit_depth_chroma_minus1
      br.ue();            // log2_min_pcm_luma_coding_block_size_minus3
      br.ue();            // log2_diff_max_min_pcm_luma_coding_block_size
      br.bit();           // pcm_loop_filter_disabled_flag
    }

    const std::uint64_t num_short_term_ref_pic_sets = br.ue();
    if (num_short_term_ref_pic_sets > 64) {
      raise("hevc.MalformedSps", "num_short_term_ref_pic_sets > 64");
    }
    std::vector<std::uint64_t> num_delta_pocs;
    for (std::uint64_t i = 0; i < num_short_term_ref_pic_sets; ++i) {
      num_delta_pocs.push_back(detail::parse_st_ref_pic_set(br, i, num_delta_pocs));
    }

    if (br.bit() != 0) {  // long_term_ref_pics_present_flag
      const std::uint64_t num_long_term = br.ue();
      if (num_long_term > 32) raise("hevc.MalformedSps", "num_long_term_ref_pics_sps > 32");
      for (std::uint64_t i = 0; i < num_long_term; ++i) {
        br.skip(static_cast<int>(log2_max_poc_lsb_minus4) + 4);  // lt_ref_pic_poc_lsb_sps
        br.bit();  // used_by_curr_pic_lt_sps_flag
      }
    }

    br.bit();  // sps_temporal_mvp_enabled_flag
    br.bit();  // strong_intra_smoothing_enabled_flag

    SpsInfo info;
    info.bit_depth_luma = 8 + static_cast<int>(bit_depth_luma_minus8);
    info.chroma_format = static_cast<ChromaFormat>(chroma_format_idc);

    // Conformance cropping units per chroma format.
    const std::uint64_t sub_width = (chroma_format_idc == 1 || chroma_format_idc == 2) ? 2 : 1;
    const std::uint64_t sub_height = (chroma_format_idc == 1) ? 2 : 1;
    const std::uint64_t crop_w = sub_width * (crop_left + crop_right);
    const std::uint64_t crop_h = sub_height * (crop_top + crop_bottom);
    if (crop_w >= pic_width || crop_h >= pic_height) {
      raise("hevc.MalformedSps", "conformance window larger than the picture");
    }
    info.width_luma = static_cast<std::uint32_t>(pic_width - crop_w);
    info.height_luma = static_cast<std::uint32_t>(pic_height - crop_h);

    if (br.bit() != 0) {  // vui_parameters_present_flag
      if (br.bit() != 0) {                     // aspect_ratio_info_present_flag
        const std::uint32_t idc = br.bits(8);  // aspect_ratio_idc
        if (idc == 255) br.skip(32);           // sar_width, sar_height
      }
      if (br.bit() != 0) br.bit();  // overscan_info / overscan_appropriate
      if (br.bit() != 0) {          // video_signal_type_present_flag
        br.skip(3);                 // video_format
        info.full_range = br.bit() != 0;
        if (br.bit() != 0) br.skip(24);  // colour primaries/transfer/matrix
      }
      if (br.bit() != 0) {  // chroma_loc_info_present_flag
        br.ue();
        br.ue();
      }
      br.bit();             // neutral_chroma_indication_flag
      br.bit();             // field_seq_flag
      br.bit();             // frame_field_info_present_flag
      if (br.bit() != 0) {  // default_display_window_flag
        br.ue();
        br.ue();
        br.ue();
        br.ue();
      }
      if (br.bit() != 0) {  // vui_timing_info_present_flag
        const std::uint32_t num_units_in_tick = br.bits(32);
        const std::uint32_t time_scale = br.bits(32);
        if (num_units_in_tick == 0 || time_scale == 0) {
          raise("hevc.MalformedSps", "zero VUI timing values");
        }
        info.frame_rate = static_cast<double>(time_scale) / num_units_in_tick;
      }
      // Nothing needed beyond the timing info; remaining VUI/extension
      // syntax is left unread.
    }
    return info;
  } catch (const Error& e) {
    if (e.code() == "bitio.Exhausted") {
      raise("hevc.MalformedSps", "SPS payload exhausted mid-parse");
    }
    throw;
  }
}

// --- metadata probe ---------------------------------------------------------

// Table-1 metadata from an Annex-B stream: first SPS is authoritative,
// bitrate is 8 * bytes / duration / 1000 (kbps). frame_rate_override takes
// precedence over VUI timing.
inline MetadataFeatures probe_metadata(std::span<const std::uint8_t> stream, double duration_s,
                                       std::optional<double> frame_rate_override = std::nullopt) {
  if (duration_s <= 0.0) raise("hevc.BadDuration", "duration must be positive");
  const std::vector<NalUnit> units = split_nal_units(stream);

  std::optional<SpsInfo> first;
  for (const NalUnit& unit : units) {
    if (unit.nal_type != kNalTypeSps) continue;
    SpsInfo info = parse_sps(unit);
    if (!first) {
      first = info;
    } else if (!(info == *first)) {
      log::warn("multiple SPS disagree; keeping the first");
    }
  }
  if (!first) raise("hevc.NoSps", "stream contains no SPS");

  MetadataFeatures meta;
  meta.resolution = static_cast<std::uint64_t>(first->width_luma) * first->height_luma;
  meta.codec = Codec::h265;
  meta.chroma_format = first->chroma_format;
  meta.bit_depth = first->bit_depth_luma;
  meta.full_range = first->full_range.value_or(false);
  if (frame_rate_override) {
    meta.frame_rate = *frame_rate_override;
  } else if (first->frame_rate) {
    meta.frame_rate = *first->frame_rate;
  } else {
    raise("hevc.MissingFrameRate", "no VUI timing and no frame-rate override");
  }
  meta.bitrate_kbps = 8.0 * static_cast<double>(stream.size()) / duration_s / 1000.0;
  return meta;
}

}  // namespace eqm
