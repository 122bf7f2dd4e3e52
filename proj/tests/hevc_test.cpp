#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eqm/hevc.hpp"
#include "eqm/log.hpp"
#include "support/sps_writer.hpp"

using namespace eqm;
using testsupport::SpsPlan;

namespace {

bool raises_code(const std::function<void()>& fn, const std::string& code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

std::vector<std::uint8_t> random_payload(std::mt19937_64& mt, std::size_t max_len) {
  // Zero-heavy bytes so emulation-prevention sites are common.
  std::vector<std::uint8_t> out;
  const std::size_t len = 1 + mt() % max_len;
  for (std::size_t i = 0; i < len; ++i) {
    const std::uint64_t r = mt() % 10;
    out.push_back(r < 5 ? 0x00 : static_cast<std::uint8_t>(mt() % 256));
  }
  if (out[0] == 0x00) out[0] = 0x42;  // keep a plausible NAL header byte
  // Real payloads end with the stop-bit byte; a trailing zero would merge
  // into the next start code and shift the unit boundary.
  if (out.back() == 0x00) out.back() = 0x6B;
  return out;
}

}  // namespace

TEST_CASE("escape inserts emulation prevention bytes", "[hevc]") {
  const std::vector<std::uint8_t> raw = {0x42, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
                                         0x05, 0x00, 0x00};
  const std::vector<std::uint8_t> expected = {0x42, 0x00, 0x00, 0x03, 0x01, 0x00, 0x00,
                                              0x03, 0x00, 0x05, 0x00, 0x00, 0x03};
  CHECK(escape_payload(raw) == expected);
  CHECK(unescape_payload(expected) == raw);
}

TEST_CASE("escape leaves safe bytes alone", "[hevc]") {
  const std::vector<std::uint8_t> raw = {0x00, 0x01, 0x00, 0x00, 0x04, 0xFF, 0x00};
  CHECK(escape_payload(raw) == raw);
  CHECK(unescape_payload(raw) == raw);
}

TEST_CASE("unescape then escape is identity on canonical payloads", "[hevc]") {
  std::mt19937_64 mt(21);
  for (int round = 0; round < 1000; ++round) {
    const std::vector<std::uint8_t> raw = random_payload(mt, 200);
    const std::vector<std::uint8_t> escaped = escape_payload(raw);
    REQUIRE(unescape_payload(escaped) == raw);
    CHECK(escape_payload(unescape_payload(escaped)) == escaped);
  }
}

TEST_CASE("split and assemble round-trip byte-exactly", "[hevc]") {
  std::mt19937_64 mt(22);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::uint8_t> stream;
    const int n_units = 1 + static_cast<int>(mt() % 4);
    std::vector<std::vector<std::uint8_t>> payloads;
    for (int u = 0; u < n_units; ++u) {
      const int zeros = 2 + static_cast<int>(mt() % 3);
      stream.insert(stream.end(), static_cast<std::size_t>(zeros), 0x00);
      stream.push_back(0x01);
      const std::vector<std::uint8_t> payload = random_payload(mt, 60);
      payloads.push_back(payload);
      const std::vector<std::uint8_t> escaped = escape_payload(payload);
      stream.insert(stream.end(), escaped.begin(), escaped.end());
    }
    const std::vector<NalUnit> units = split_nal_units(stream);
    REQUIRE(units.size() == static_cast<std::size_t>(n_units));
    for (int u = 0; u < n_units; ++u) {
      CHECK(units[static_cast<std::size_t>(u)].payload == payloads[static_cast<std::size_t>(u)]);
    }
    CHECK(assemble_nal_units(units) == stream);
  }
}

TEST_CASE("framing errors carry module codes", "[hevc]") {
  CHECK(raises_code([] { split_nal_units(std::vector<std::uint8_t>{}); }, "hevc.NoStartCode"));
  CHECK(raises_code([] { split_nal_units(std::vector<std::uint8_t>{0x42, 0x13}); },
                    "hevc.NoStartCode"));
  CHECK(raises_code([] { split_nal_units(std::vector<std::uint8_t>{0x42, 0x00, 0x00, 0x01, 0x40}); },
                    "hevc.LeadingGarbage"));
  CHECK(raises_code([] { split_nal_units(std::vector<std::uint8_t>{0x00, 0x00, 0x01}); },
                    "hevc.TruncatedUnit"));
}

TEST_CASE("sps round-trips against the independent writer", "[hevc]") {
  std::mt19937_64 mt(23);
  for (int round = 0; round < 40; ++round) {
    SpsPlan p;
    p.max_sub_layers_minus1 = static_cast<int>(mt() % 3);
    p.chroma_format_idc = mt() % 4;
    p.pic_width = 16 * (1 + mt() % 480);
    p.pic_height = 16 * (1 + mt() % 270);
    p.conformance_window = (mt() % 2) == 0;
    if (p.conformance_window) {
      p.crop_left = mt() % 3;
      p.crop_right = mt() % 3;
      p.crop_top = mt() % 3;
      p.crop_bottom = mt() % 3;
    }
    p.bit_depth_luma_minus8 = mt() % 9;
    p.bit_depth_chroma_minus8 = p.bit_depth_luma_minus8;
    p.log2_max_poc_lsb_minus4 = mt() % 13;
    p.scaling_list_enabled = (mt() % 3) == 0;
    p.scaling_list_data_present = p.scaling_list_enabled && (mt() % 2) == 0;
    p.pcm_enabled = (mt() % 4) == 0;
    p.num_short_term_ref_pic_sets = mt() % 4;
    for (std::uint64_t i = 0; i < p.num_short_term_ref_pic_sets; ++i) {
      p.ref_set_negatives.push_back(1 + mt() % 3);
    }
    p.long_term_ref_pics = (mt() % 4) == 0;
    p.num_long_term = p.long_term_ref_pics ? 1 + mt() % 3 : 0;
    p.vui_present = (mt() % 4) != 0;
    p.video_signal_type = p.vui_present && (mt() % 2) == 0;
    p.full_range = p.video_signal_type && (mt() % 2) == 0;
    p.timing_info = p.vui_present && (mt() % 2) == 0;
    p.num_units_in_tick = 1 + static_cast<std::uint32_t>(mt() % 100000);
    p.time_scale = 1 + static_cast<std::uint32_t>(mt() % 10000000);

    const std::vector<std::uint8_t> stream = testsupport::write_sps_unit(p);
    const std::vector<NalUnit> units = split_nal_units(stream);
    REQUIRE(units.size() == 1);
    REQUIRE(units[0].nal_type == kNalTypeSps);
    CHECK(assemble_nal_units(units) == stream);

    const SpsInfo info = parse_sps(units[0]);
    const std::uint64_t sub_w = (p.chroma_format_idc == 1 || p.chroma_format_idc == 2) ? 2 : 1;
    const std::uint64_t sub_h = (p.chroma_format_idc == 1) ? 2 : 1;
    CHECK(info.width_luma == p.pic_width - sub_w * (p.crop_left + p.crop_right));
    CHECK(info.height_luma == p.pic_height - sub_h * (p.crop_top + p.crop_bottom));
    CHECK(info.bit_depth_luma == 8 + static_cast<int>(p.bit_depth_luma_minus8));
    CHECK(static_cast<std::uint64_t>(info.chroma_format) == p.chroma_format_idc);
    if (p.video_signal_type) {
      REQUIRE(info.full_range.has_value());
      CHECK(*info.full_range == p.full_range);
    } else {
      CHECK_FALSE(info.full_range.has_value());
    }
    if (p.timing_info) {
      REQUIRE(info.frame_rate.has_value());
      CHECK(*info.frame_rate ==
            static_cast<double>(p.time_scale) / static_cast<double>(p.num_units_in_tick));
    } else {
      CHECK_FALSE(info.frame_rate.has_value());
    }
  }
}

TEST_CASE("truncated sps raises MalformedSps", "[hevc]") {
  SpsPlan p;
  std::vector<std::uint8_t> stream = testsupport::write_sps_unit(p);
  stream.resize(stream.size() / 2);
  const std::vector<NalUnit> units = split_nal_units(stream);
  CHECK(raises_code([&] { parse_sps(units[0]); }, "hevc.MalformedSps"));
}

TEST_CASE("probe reads the first sps and the exact bitrate", "[hevc]") {
  SpsPlan p;
  p.pic_width = 3840;
  p.pic_height = 2160;
  p.chroma_format_idc = 1;
  p.bit_depth_luma_minus8 = 2;
  p.bit_depth_chroma_minus8 = 2;
  p.vui_present = true;
  p.video_signal_type = true;
  p.full_range = false;
  p.timing_info = true;
  p.num_units_in_tick = 1001;
  p.time_scale = 60060;
  std::vector<std::uint8_t> stream = testsupport::write_sps_unit(p);

  // Second, disagreeing SPS: the first must stay authoritative.
  SpsPlan p2 = p;
  p2.pic_width = 1280;
  p2.pic_height = 720;
  const std::vector<std::uint8_t> second = testsupport::write_sps_unit(p2);
  stream.insert(stream.end(), second.begin(), second.end());

  const auto saved = log::threshold();
  log::threshold() = log::Level::off;
  const MetadataFeatures meta = probe_metadata(stream, 2.0);
  log::threshold() = saved;

  CHECK(meta.resolution == 3840ull * 2160ull);
  CHECK(meta.frame_rate == 60060.0 / 1001.0);
  CHECK(meta.codec == Codec::h265);
  CHECK(meta.bit_depth == 10);
  CHECK(meta.chroma_format == ChromaFormat::c420);
  CHECK_FALSE(meta.full_range);
  CHECK(meta.bitrate_kbps == 8.0 * static_cast<double>(stream.size()) / 2.0 / 1000.0);
  CHECK(meta.pixel_format() == "yuv420p10le");
  CHECK(meta.pixel_format_code() == 1020.0);
  CHECK(meta.codec_code() == 0.0);

  const MetadataFeatures forced = probe_metadata(stream, 2.0, 24.0);
  CHECK(forced.frame_rate == 24.0);
}

TEST_CASE("probe error paths", "[hevc]") {
  SpsPlan no_vui;
  const std::vector<std::uint8_t> stream = testsupport::write_sps_unit(no_vui);
  CHECK(raises_code([&] { probe_metadata(stream, 1.0); }, "hevc.MissingFrameRate"));
  CHECK(raises_code([&] { probe_metadata(stream, 0.0, 30.0); }, "hevc.BadDuration"));

  std::vector<std::uint8_t> no_sps = {0x00, 0x00, 0x01, 0x40, 0x01, 0x99};
  CHECK(raises_code([&] { probe_metadata(no_sps, 1.0, 30.0); }, "hevc.NoSps"));
}
