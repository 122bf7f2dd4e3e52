#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eqm/errors.hpp"

namespace eqm {

enum class RefList : int { l0 = 0, l1 = 1 };

enum class FrameType : int { i = 0, p = 1, b = 2 };

inline char frame_type_char(FrameType t) {
  switch (t) {
    case FrameType::i: return 'I';
    case FrameType::p: return 'P';
    case FrameType::b: return 'B';
  }
  raise("trace.InvariantViolation", "unknown frame type");
}

struct MotionVector {
  RefList list = RefList::l0;
  int ref_poc = 0;
  int mv_x = 0;  // quarter-pel
  int mv_y = 0;  // quarter-pel

  friend bool operator==(const MotionVector&, const MotionVector&) = default;
};

struct BlockRecord {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  int qp = 0;
  int cu_size = 0;
  bool skip = false;
  std::vector<MotionVector> mvs;

  double area() const { return static_cast<double>(w) * static_cast<double>(h); }

  friend bool operator==(const BlockRecord&, const BlockRecord&) = default;
};

struct FrameRecord {
  int poc = 0;
  FrameType frame_type = FrameType::i;
  std::int64_t frame_size = 0;  // bytes
  int width = 0;
  int height = 0;
  double frame_rate = 0.0;
  std::vector<BlockRecord> blocks;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

// Normalization constants used by the motion features; serialized with models.
struct NormConfig {
  double max_frame_width = 3840.0;
  double max_frame_rate = 60.0;
  double low_motion_tau = 1.0;   // normalized quarter-pel units
  double global_threshold = 0.80;

  friend bool operator==(const NormConfig&, const NormConfig&) = default;
};

namespace detail {

[[noreturn]] inline void trace_syntax(std::size_t line, const std::string& what) {
  raise("trace.SyntaxError", "line " + std::to_string(line) + ": " + what);
}

[[noreturn]] inline void trace_invariant(std::size_t line, const std::string& what) {
  raise("trace.InvariantViolation", "line " + std::to_string(line) + ": " + what);
}

// Reusable coverage bitmap; drops to pixel granularity when a frame carries
// blocks that are not 4-aligned.
struct TilingScratch {
  std::vector<std::uint8_t> cells;
};

inline void check_tiling(const FrameRecord& f, std::size_t line, TilingScratch& scratch) {
  std::int64_t area = 0;
  bool aligned4 = f.width % 4 == 0 && f.height % 4 == 0;
  for (const BlockRecord& b : f.blocks) {
    area += static_cast<std::int64_t>(b.w) * b.h;
    aligned4 = aligned4 && b.x % 4 == 0 && b.y % 4 == 0 && b.w % 4 == 0 && b.h % 4 == 0;
  }
  const std::int64_t frame_area = static_cast<std::int64_t>(f.width) * f.height;
  if (area != frame_area) {
    trace_invariant(line, "blocks cover " + std::to_string(area) + " of " +
                              std::to_string(frame_area) + " pixels");
  }
  const int scale = aligned4 ? 4 : 1;
  const int gw = f.width / scale;
  scratch.cells.assign(static_cast<std::size_t>(gw) * (f.height / scale), 0);
  for (const BlockRecord& b : f.blocks) {
    for (int row = b.y / scale; row < (b.y + b.h) / scale; ++row) {
      std::uint8_t* cell = scratch.cells.data() +
                           static_cast<std::size_t>(row) * gw + b.x / scale;
      for (int c = 0; c < b.w / scale; ++c, ++cell) {
        if (*cell) {
          trace_invariant(line, "overlapping blocks at (" + std::to_string(b.x) + "," +
                                    std::to_string(b.y) + ")");
        }
        *cell = 1;
      }
    }
  }
}

inline void validate_frame(const FrameRecord& f, std::size_t line, TilingScratch& scratch) {
  if (f.width <= 0 || f.height <= 0) trace_invariant(line, "frame dimensions must be positive");
  if (!(f.frame_rate > 0.0)) trace_invariant(line, "fps must be positive");
  if (f.frame_size < 0) trace_invariant(line, "size must be non-negative");
  if (f.blocks.empty()) trace_invariant(line, "frame has no blocks");
  const std::size_t mv_limit = f.frame_type == FrameType::b ? 2 : f.frame_type == FrameType::p ? 1 : 0;
  for (const BlockRecord& b : f.blocks) {
    if (b.w <= 0 || b.h <= 0) trace_invariant(line, "block dimensions must be positive");
    if (b.x < 0 || b.y < 0 || b.x + b.w > f.width || b.y + b.h > f.height) {
      trace_invariant(line, "block (" + std::to_string(b.x) + "," + std::to_string(b.y) +
                                " " + std::to_string(b.w) + "x" + std::to_string(b.h) +
                                ") outside frame bounds");
    }
    if (b.qp < 0 || b.qp > 51) trace_invariant(line, "qp " + std::to_string(b.qp) + " out of range 0..51");
    if (b.cu_size != 8 && b.cu_size != 16 && b.cu_size != 32 && b.cu_size != 64) {
      trace_invariant(line, "cu " + std::to_string(b.cu_size) + " not in {8,16,32,64}");
    }
    if (b.mvs.size() > mv_limit) {
      trace_invariant(line, std::string(1, frame_type_char(f.frame_type)) + " frame block carries " +
                                std::to_string(b.mvs.size()) + " motion vectors");
    }
    if (f.frame_type == FrameType::i && b.skip) trace_invariant(line, "skip block in an I frame");
  }
  check_tiling(f, line, scratch);
}

inline std::int64_t require_int(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end()) trace_syntax(line, std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) trace_syntax(line, std::string("field '") + key + "' must be an integer");
  return it->get<std::int64_t>();
}

inline void require_keys(const nlohmann::json& j, std::span<const char* const> allowed,
                         std::size_t line, const char* what) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) trace_syntax(line, std::string("unknown ") + what + " field '" + item.key() + "'");
  }
}

inline BlockRecord parse_block(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) trace_syntax(line, "block must be an object");
  static constexpr const char* kKeys[] = {"x", "y", "w", "h", "qp", "cu", "skip", "mvs"};
  require_keys(j, kKeys, line, "block");
  BlockRecord b;
  b.x = static_cast<int>(require_int(j, "x", line));
  b.y = static_cast<int>(require_int(j, "y", line));
  b.w = static_cast<int>(require_int(j, "w", line));
  b.h = static_cast<int>(require_int(j, "h", line));
  b.qp = static_cast<int>(require_int(j, "qp", line));
  b.cu_size = static_cast<int>(require_int(j, "cu", line));
  const auto skip = j.find("skip");
  if (skip == j.end()) trace_syntax(line, "missing field 'skip'");
  if (!skip->is_boolean()) trace_syntax(line, "field 'skip' must be a boolean");
  b.skip = skip->get<bool>();
  const auto mvs = j.find("mvs");
  if (mvs == j.end()) trace_syntax(line, "missing field 'mvs'");
  if (!mvs->is_array()) trace_syntax(line, "field 'mvs' must be an array");
  for (const nlohmann::json& m : *mvs) {
    if (!m.is_array() || m.size() != 4) trace_syntax(line, "mv must be [list, ref_poc, mvx, mvy]");
    for (const nlohmann::json& v : m) {
      if (!v.is_number_integer()) trace_syntax(line, "mv components must be integers");
    }
    const std::int64_t list = m[0].get<std::int64_t>();
    if (list != 0 && list != 1) trace_syntax(line, "mv list must be 0 or 1");
    b.mvs.push_back(MotionVector{static_cast<RefList>(list), static_cast<int>(m[1].get<std::int64_t>()),
                                 static_cast<int>(m[2].get<std::int64_t>()),
                                 static_cast<int>(m[3].get<std::int64_t>())});
  }
  return b;
}

inline FrameRecord parse_frame_line(const std::string& text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    trace_syntax(line, e.what());
  }
  if (!j.is_object()) trace_syntax(line, "frame must be an object");
  static constexpr const char* kKeys[] = {"poc", "type", "size", "w", "h", "fps", "blocks"};
  require_keys(j, kKeys, line, "frame");
  FrameRecord f;
  f.poc = static_cast<int>(require_int(j, "poc", line));
  const auto type = j.find("type");
  if (type == j.end()) trace_syntax(line, "missing field 'type'");
  if (!type->is_string()) trace_syntax(line, "field 'type' must be a string");
  const std::string t = type->get<std::string>();
  if (t == "I") f.frame_type = FrameType::i;
  else if (t == "P") f.frame_type = FrameType::p;
  else if (t == "B") f.frame_type = FrameType::b;
  else trace_syntax(line, "field 'type' must be \"I\", \"P\" or \"B\"");
  f.frame_size = require_int(j, "size", line);
  f.width = static_cast<int>(require_int(j, "w", line));
  f.height = static_cast<int>(require_int(j, "h", line));
  const auto fps = j.find("fps");
  if (fps == j.end()) trace_syntax(line, "missing field 'fps'");
  if (!fps->is_number()) trace_syntax(line, "field 'fps' must be a number");
  f.frame_rate = fps->get<double>();
  const auto blocks = j.find("blocks");
  if (blocks == j.end()) trace_syntax(line, "missing field 'blocks'");
  if (!blocks->is_array()) trace_syntax(line, "field 'blocks' must be an array");
  f.blocks.reserve(blocks->size());
  for (const nlohmann::json& b : *blocks) f.blocks.push_back(parse_block(b, line));
  return f;
}

}  // namespace detail

// Single-pass ingestion: each validated frame is handed to the sink in file
// order; memory use stays bounded by one frame plus the POC set.
inline void for_each_trace_frame(std::istream& in,
                                 const std::function<void(FrameRecord&&)>& sink) {
  detail::TilingScratch scratch;
  std::unordered_set<int> seen_pocs;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    FrameRecord f = detail::parse_frame_line(text, line);
    detail::validate_frame(f, line, scratch);
    if (!seen_pocs.insert(f.poc).second) {
      detail::trace_invariant(line, "duplicate poc " + std::to_string(f.poc));
    }
    sink(std::move(f));
  }
  if (in.bad()) raise("trace.SyntaxError", "read failure on trace stream");
}

inline std::vector<FrameRecord> parse_trace(std::istream& in) {
  std::vector<FrameRecord> frames;
  for_each_trace_frame(in, [&frames](FrameRecord&& f) { frames.push_back(std::move(f)); });
  return frames;
}

// One frame as a single JSON line (no terminator). Numbers round-trip
// exactly: integers verbatim, fps via shortest-form serialization.
inline std::string serialize_frame(const FrameRecord& f) {
  nlohmann::ordered_json j;
  j["poc"] = f.poc;
  j["type"] = std::string(1, frame_type_char(f.frame_type));
  j["size"] = f.frame_size;
  j["w"] = f.width;
  j["h"] = f.height;
  j["fps"] = f.frame_rate;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const BlockRecord& b : f.blocks) {
    nlohmann::ordered_json jb;
    jb["x"] = b.x;
    jb["y"] = b.y;
    jb["w"] = b.w;
    jb["h"] = b.h;
    jb["qp"] = b.qp;
    jb["cu"] = b.cu_size;
    jb["skip"] = b.skip;
    nlohmann::ordered_json mvs = nlohmann::ordered_json::array();
    for (const MotionVector& m : b.mvs) {
      mvs.push_back({static_cast<int>(m.list), m.ref_poc, m.mv_x, m.mv_y});
    }
    jb["mvs"] = std::move(mvs);
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  return j.dump();
}

inline std::string serialize_trace(std::span<const FrameRecord> frames) {
  std::string out;
  for (const FrameRecord& f : frames) {
    out += serialize_frame(f);
    out += '\n';
  }
  return out;
}

}  // namespace eqm
