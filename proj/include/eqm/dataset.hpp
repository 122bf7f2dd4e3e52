#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "eqm/errors.hpp"
#include "eqm/log.hpp"
#include "eqm/pooling.hpp"
#include "eqm/textio.hpp"

namespace eqm {

// Rows of segment/video feature vectors keyed by video id. Columns are the
// canonical keys followed by any external (pixel-metric) columns.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::string> video_ids;
  std::vector<std::int64_t> segment_ids;
  std::vector<std::vector<double>> values;

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    raise("dataset.MissingColumns", "column '" + std::string(name) + "' not present");
  }
};

struct MosEntry {
  std::string video_id;
  double mos = 0.0;
};

struct LabeledDataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> video_ids;
  std::vector<std::vector<double>> features;  // row-major, aligned with feature_names
  std::vector<double> mos;

  std::size_t size() const { return video_ids.size(); }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
      if (feature_names[i] == name) return i;
    }
    raise("dataset.MissingColumns", "column '" + std::string(name) + "' not present");
  }
};

inline std::vector<std::string> standard_feature_columns() {
  std::vector<std::string> cols;
  cols.reserve(kEqmFeatureKeys.size() + kMetadataKeys.size());
  for (const char* k : kEqmFeatureKeys) cols.emplace_back(k);
  for (const char* k : kMetadataKeys) cols.emplace_back(k);
  return cols;
}

inline std::vector<double> flatten_features(const SegmentFeatures& seg) {
  std::vector<double> out(seg.eqm.begin(), seg.eqm.end());
  out.reserve(out.size() + kMetadataKeys.size());
  for (const char* k : kMetadataKeys) out.push_back(metadata_value(seg.meta, k));
  return out;
}

namespace detail {

inline void check_video_id(std::string_view id, std::size_t line) {
  if (id.empty()) raise("dataset.SyntaxError", "line " + std::to_string(line) + ": empty video_id");
  for (const char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) {
      raise("dataset.SyntaxError", "line " + std::to_string(line) +
                                       ": video_id may use only [A-Za-z0-9_.-], got '" +
                                       std::string(id) + "'");
    }
  }
}

inline double parse_csv_double(std::string_view field, std::size_t line, std::string_view col) {
  try {
    return parse_double(field, "dataset.SyntaxError");
  } catch (const Error&) {
    raise("dataset.SyntaxError", "line " + std::to_string(line) + ": column '" + std::string(col) +
                                     "' is not a number: '" + std::string(field) + "'");
  }
}

inline std::int64_t parse_csv_int(std::string_view field, std::size_t line, std::string_view col) {
  try {
    return parse_int(field, "dataset.SyntaxError");
  } catch (const Error&) {
    raise("dataset.SyntaxError", "line " + std::to_string(line) + ": column '" + std::string(col) +
                                     "' is not an integer: '" + std::string(field) + "'");
  }
}

}  // namespace detail

inline void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  out << "video_id,segment_idx";
  for (const std::string& c : table.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < table.video_ids.size(); ++r) {
    out << table.video_ids[r] << ',' << table.segment_ids[r];
    for (const double v : table.values[r]) out << ',' << format_sig9(v);
    out << '\n';
  }
}

inline FeatureTable read_feature_csv(std::istream& in) {
  FeatureTable table;
  std::string line;
  if (!std::getline(in, line)) raise("dataset.SyntaxError", "empty feature CSV");
  line = strip_cr(std::move(line));
  const std::vector<std::string> header = split(line, ',');
  const std::vector<std::string> standard = standard_feature_columns();
  if (header.size() < 2 + standard.size() || header[0] != "video_id" || header[1] != "segment_idx") {
    raise("dataset.SchemaMismatch", "feature CSV header must start with video_id,segment_idx,<canonical keys>");
  }
  for (std::size_t i = 0; i < standard.size(); ++i) {
    if (header[2 + i] != standard[i]) {
      raise("dataset.SchemaMismatch", "feature CSV column " + std::to_string(2 + i) + " is '" +
                                          header[2 + i] + "', expected '" + standard[i] + "'");
    }
  }
  table.columns.assign(header.begin() + 2, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != header.size()) {
      raise("dataset.SyntaxError", "line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
    }
    detail::check_video_id(fields[0], line_no);
    std::vector<double> row;
    row.reserve(table.columns.size());
    for (std::size_t i = 2; i < fields.size(); ++i) {
      row.push_back(detail::parse_csv_double(fields[i], line_no, header[i]));
    }
    table.video_ids.push_back(fields[0]);
    table.segment_ids.push_back(detail::parse_csv_int(fields[1], line_no, "segment_idx"));
    table.values.push_back(std::move(row));
  }
  return table;
}

// Two-column id/value CSV used for MOS tables and score tables.
inline void write_mos_csv(std::ostream& out, std::span<const MosEntry> rows,
                          std::string_view value_column = "mos") {
  out << "video_id," << value_column << '\n';
  for (const MosEntry& r : rows) out << r.video_id << ',' << format_sig9(r.mos) << '\n';
}

inline std::vector<MosEntry> read_mos_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) raise("dataset.SyntaxError", "empty MOS CSV");
  line = strip_cr(std::move(line));
  const std::vector<std::string> header = split(line, ',');
  if (header.size() != 2 || header[0] != "video_id") {
    raise("dataset.SchemaMismatch", "MOS CSV header must be video_id,<value>");
  }
  std::vector<MosEntry> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != 2) {
      raise("dataset.SyntaxError", "line " + std::to_string(line_no) + ": expected 2 fields");
    }
    detail::check_video_id(fields[0], line_no);
    rows.push_back({fields[0], detail::parse_csv_double(fields[1], line_no, header[1])});
  }
  return rows;
}

inline void validate_dataset(const LabeledDataset& data) {
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (!std::isfinite(data.mos[r])) {
      raise("dataset.NonFiniteInput", "non-finite MOS for video '" + data.video_ids[r] + "'");
    }
    if (data.features[r].size() != data.feature_names.size()) {
      raise("dataset.SchemaMismatch", "row width mismatch for video '" + data.video_ids[r] + "'");
    }
    for (const double v : data.features[r]) {
      if (!std::isfinite(v)) {
        raise("dataset.NonFiniteInput", "non-finite feature for video '" + data.video_ids[r] + "'");
      }
    }
  }
}

// Joins feature rows with MOS labels by video id. Feature rows must be
// video-level (unique ids); every feature row needs a label.
inline LabeledDataset join_labels(const FeatureTable& table, std::span<const MosEntry> labels) {
  std::unordered_map<std::string, double> by_id;
  for (const MosEntry& m : labels) {
    if (!by_id.emplace(m.video_id, m.mos).second) {
      raise("dataset.DuplicateVideoId", "label listed twice for video '" + m.video_id + "'");
    }
  }
  LabeledDataset data;
  data.feature_names = table.columns;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < table.video_ids.size(); ++r) {
    const std::string& id = table.video_ids[r];
    if (!seen.insert(id).second) {
      raise("dataset.DuplicateVideoId", "feature table has multiple rows for video '" + id + "'");
    }
    const auto it = by_id.find(id);
    if (it == by_id.end()) raise("dataset.MissingLabel", "no MOS entry for video '" + id + "'");
    data.video_ids.push_back(id);
    data.features.push_back(table.values[r]);
    data.mos.push_back(it->second);
  }
  if (by_id.size() > data.size()) {
    log::warn(std::to_string(by_id.size() - data.size()) +
              " MOS entries have no matching feature row; ignored");
  }
  validate_dataset(data);
  return data;
}

// Column-subset matrix used to feed a forest.
inline std::vector<std::vector<double>> select_columns(const LabeledDataset& data,
                                                       std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const std::string& n : names) idx.push_back(data.column_index(n));
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  for (const std::vector<double>& row : data.features) {
    std::vector<double> r;
    r.reserve(idx.size());
    for (const std::size_t i : idx) r.push_back(row[i]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace eqm
