#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqm/dataset.hpp"
#include "eqm/errors.hpp"
#include "eqm/forest.hpp"
#include "eqm/log.hpp"
#include "eqm/pooling.hpp"
#include "eqm/textio.hpp"
#include "eqm/trace.hpp"
#include "eqm/version.hpp"

namespace eqm {

enum class Level { metadata, nr, fr };

inline const char* level_name(Level level) {
  switch (level) {
    case Level::metadata: return "metadata";
    case Level::nr: return "nr";
    case Level::fr: return "fr";
  }
  raise("model.CorruptModel", "unknown level");
}

inline Level level_from_name(std::string_view name) {
  if (name == "metadata") return Level::metadata;
  if (name == "nr") return Level::nr;
  if (name == "fr") return Level::fr;
  raise("model.CorruptModel", "unknown level '" + std::string(name) + "'");
}

inline constexpr const char* kBaseOutputKey = "base_output";

// Two-stage predictor: base forest on metadata (+ mean QP), residual forest
// on the full feature set plus the base output. The Metadata level keeps the
// single forest in `residual` with no base stage.
struct EqmModel {
  Level level = Level::nr;
  bool without_base_qp = false;
  std::optional<Forest> base;
  Forest residual;
  std::vector<std::string> base_feature_keys;
  std::vector<std::string> residual_feature_keys;
  std::vector<std::string> external_columns;  // FR level only
  NormConfig norm;

  bool operator==(const EqmModel&) const = default;
};

struct TrainOptions {
  Level level = Level::nr;
  bool without_base_qp = false;
  ForestParams base_params;
  ForestParams residual_params;
  NormConfig norm;
  std::vector<std::string> external_columns;  // consulted for FR level
};

namespace detail {

inline std::size_t require_column(const LabeledDataset& data, const std::string& name) {
  try {
    return data.column_index(name);
  } catch (const Error&) {
    raise("model.MissingColumns", "training data lacks column '" + name + "'");
  }
}

inline Matrix gather(const LabeledDataset& data, std::span<const std::string> keys) {
  std::vector<std::size_t> idx;
  idx.reserve(keys.size());
  for (const std::string& k : keys) idx.push_back(require_column(data, k));
  Matrix out;
  out.reserve(data.size());
  for (const std::vector<double>& row : data.features) {
    std::vector<double> r;
    r.reserve(idx.size());
    for (const std::size_t i : idx) r.push_back(row[i]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

inline EqmModel train_eqm(const LabeledDataset& data, const TrainOptions& opts) {
  if (data.size() < 10) {
    raise("model.TooFewRows", "training needs at least 10 rows, got " +
                                  std::to_string(data.size()));
  }
  validate_dataset(data);
  EqmModel model;
  model.level = opts.level;
  model.without_base_qp = opts.without_base_qp;
  model.norm = opts.norm;

  std::vector<std::string> metadata_keys(kMetadataKeys.begin(), kMetadataKeys.end());
  if (opts.level == Level::metadata) {
    model.residual_feature_keys = metadata_keys;
    const Matrix x = detail::gather(data, model.residual_feature_keys);
    model.residual = fit_forest(x, data.mos, opts.base_params, model.residual_feature_keys);
    return model;
  }

  if (opts.level == Level::fr) {
    model.external_columns = opts.external_columns;
    if (model.external_columns.empty()) {
      raise("model.MissingColumns", "FR level needs at least one external column");
    }
  }

  model.base_feature_keys = metadata_keys;
  if (!opts.without_base_qp) model.base_feature_keys.emplace_back("mean_avgQP");
  const Matrix xb = detail::gather(data, model.base_feature_keys);
  model.base = fit_forest(xb, data.mos, opts.base_params, model.base_feature_keys);

  const std::vector<std::optional<double>> oob = oob_predict(*model.base, xb);
  std::vector<double> base_out(data.size());
  std::size_t fallbacks = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (oob[r]) {
      base_out[r] = *oob[r];
    } else {
      base_out[r] = predict(*model.base, xb[r]);
      ++fallbacks;
    }
  }
  if (fallbacks > 0) {
    log::warn(std::to_string(fallbacks) +
              " rows were in every bootstrap bag; residual targets use full base predictions there");
  }

  model.residual_feature_keys.emplace_back(kBaseOutputKey);
  model.residual_feature_keys.insert(model.residual_feature_keys.end(), metadata_keys.begin(),
                                     metadata_keys.end());
  for (const char* k : kEqmFeatureKeys) model.residual_feature_keys.emplace_back(k);
  for (const std::string& k : model.external_columns) model.residual_feature_keys.push_back(k);

  std::vector<std::string> table_keys(model.residual_feature_keys.begin() + 1,
                                      model.residual_feature_keys.end());
  const Matrix xr_tail = detail::gather(data, table_keys);
  Matrix xr;
  xr.reserve(data.size());
  std::vector<double> residual_target(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::vector<double> row;
    row.reserve(1 + xr_tail[r].size());
    row.push_back(base_out[r]);
    row.insert(row.end(), xr_tail[r].begin(), xr_tail[r].end());
    xr.push_back(std::move(row));
    residual_target[r] = data.mos[r] - base_out[r];
  }
  model.residual = fit_forest(xr, residual_target, opts.residual_params,
                              model.residual_feature_keys);
  return model;
}

// Resolved positions of a model's inputs inside a feature table's columns.
struct ModelInputBinding {
  std::vector<std::size_t> base_idx;
  std::vector<std::size_t> residual_idx;  // first slot is the base output
};

inline ModelInputBinding bind_inputs(const EqmModel& model,
                                     std::span<const std::string> columns) {
  const auto find = [&columns](const std::string& name) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    raise("model.MissingColumns", "input lacks column '" + name + "'");
  };
  ModelInputBinding b;
  for (const std::string& k : model.base_feature_keys) b.base_idx.push_back(find(k));
  for (std::size_t i = model.base ? 1 : 0; i < model.residual_feature_keys.size(); ++i) {
    b.residual_idx.push_back(find(model.residual_feature_keys[i]));
  }
  return b;
}

inline double predict_eqm(const EqmModel& model, const ModelInputBinding& binding,
                          std::span<const double> row) {
  std::vector<double> xr;
  xr.reserve(model.residual_feature_keys.size());
  double base_out = 0.0;
  if (model.base) {
    std::vector<double> xb;
    xb.reserve(binding.base_idx.size());
    for (const std::size_t i : binding.base_idx) xb.push_back(row[i]);
    base_out = predict(*model.base, xb);
    xr.push_back(base_out);
  }
  for (const std::size_t i : binding.residual_idx) xr.push_back(row[i]);
  const double score = base_out + predict(model.residual, xr);
  return std::clamp(score, 0.0, 100.0);
}

inline double predict_eqm(const EqmModel& model, std::span<const std::string> columns,
                          std::span<const double> row) {
  return predict_eqm(model, bind_inputs(model, columns), row);
}

// --- model file ------------------------------------------------------------
//
// Versioned single-file text container:
//   EQM-MODEL <version>
//   checksum <16 hex digits>      FNV-1a 64 over every byte after this line
//   ...sections...
// Doubles are printed with 17 significant digits so reload is bit-exact.

namespace detail {

inline void emit_forest(std::string& out, const Forest& f) {
  out += "forest " + std::to_string(f.feature_names.size()) + "\n";
  for (const std::string& k : f.feature_names) out += "key " + k + "\n";
  out += "params " + std::to_string(f.params.n_trees) + " " + std::to_string(f.params.max_depth) +
         " " + std::to_string(f.params.min_samples_leaf) + " " + std::to_string(f.params.mtry) +
         " " + std::to_string(f.params.seed) + "\n";
  out += "gains";
  for (const double g : f.split_gain) out += " " + format_exact(g);
  out += "\n";
  for (const Tree& tree : f.trees) {
    out += "tree " + std::to_string(tree.nodes.size()) + "\n";
    for (const TreeNode& n : tree.nodes) {
      out += "node " + std::to_string(n.feature) + " " + format_exact(n.threshold) + " " +
             std::to_string(n.left) + " " + std::to_string(n.right) + " " + format_exact(n.value) +
             "\n";
    }
  }
  out += "bags " + std::to_string(f.in_bag.empty() ? 0 : f.in_bag.front().size()) + "\n";
  for (const std::vector<std::uint8_t>& bag : f.in_bag) {
    std::string line = "bag ";
    line.reserve(bag.size() + 5);
    for (const std::uint8_t b : bag) line += b ? '1' : '0';
    out += line;
    out += "\n";
  }
}

class ModelReader {
 public:
  explicit ModelReader(std::string_view payload) : rest_(payload) {}

  bool done() const { return rest_.empty(); }

  std::vector<std::string> line(const char* expected_tag) {
    const std::size_t nl = rest_.find('\n');
    if (nl == std::string_view::npos) {
      raise("model.CorruptModel", std::string("unexpected end of file, wanted '") + expected_tag + "'");
    }
    std::string text(rest_.substr(0, nl));
    rest_.remove_prefix(nl + 1);
    ++line_no_;
    std::vector<std::string> tokens = split(text, ' ');
    if (tokens.empty() || tokens.front() != expected_tag) {
      raise("model.CorruptModel", "line " + std::to_string(line_no_) + ": expected '" +
                                      expected_tag + "', got '" + text + "'");
    }
    return tokens;
  }

  std::string_view peek_tag() const {
    const std::size_t sp = rest_.find_first_of(" \n");
    return rest_.substr(0, sp == std::string_view::npos ? rest_.size() : sp);
  }

 private:
  std::string_view rest_;
  std::size_t line_no_ = 2;  // header and checksum already consumed
};

inline double model_double(const std::string& token) {
  return parse_double(token, "model.CorruptModel");
}

inline std::uint64_t model_u64(const std::string& token) {
  return parse_u64(token, "model.CorruptModel");
}

inline Forest read_forest(ModelReader& r) {
  Forest f;
  auto head = r.line("forest");
  if (head.size() != 2) raise("model.CorruptModel", "malformed forest header");
  const std::size_t n_keys = model_u64(head[1]);
  for (std::size_t i = 0; i < n_keys; ++i) {
    auto key = r.line("key");
    if (key.size() != 2) raise("model.CorruptModel", "malformed key line");
    f.feature_names.push_back(key[1]);
  }
  auto params = r.line("params");
  if (params.size() != 6) raise("model.CorruptModel", "malformed params line");
  f.params.n_trees = model_u64(params[1]);
  f.params.max_depth = model_u64(params[2]);
  f.params.min_samples_leaf = model_u64(params[3]);
  f.params.mtry = model_u64(params[4]);
  f.params.seed = model_u64(params[5]);
  auto gains = r.line("gains");
  if (gains.size() != 1 + n_keys) raise("model.CorruptModel", "malformed gains line");
  for (std::size_t i = 0; i < n_keys; ++i) f.split_gain.push_back(model_double(gains[1 + i]));
  for (std::size_t t = 0; t < f.params.n_trees; ++t) {
    auto tree_head = r.line("tree");
    if (tree_head.size() != 2) raise("model.CorruptModel", "malformed tree header");
    const std::size_t n_nodes = model_u64(tree_head[1]);
    Tree tree;
    tree.nodes.reserve(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) {
      auto node = r.line("node");
      if (node.size() != 6) raise("model.CorruptModel", "malformed node line");
      TreeNode nd;
      nd.feature = static_cast<std::int32_t>(parse_int(node[1], "model.CorruptModel"));
      nd.threshold = model_double(node[2]);
      nd.left = static_cast<std::int32_t>(parse_int(node[3], "model.CorruptModel"));
      nd.right = static_cast<std::int32_t>(parse_int(node[4], "model.CorruptModel"));
      nd.value = model_double(node[5]);
      if (nd.feature >= static_cast<std::int32_t>(n_keys)) {
        raise("model.CorruptModel", "node feature index out of range");
      }
      const auto limit = static_cast<std::int32_t>(n_nodes);
      if (nd.feature >= 0 && (nd.left < 0 || nd.right < 0 || nd.left >= limit || nd.right >= limit)) {
        raise("model.CorruptModel", "node child index out of range");
      }
      tree.nodes.push_back(nd);
    }
    if (tree.nodes.empty()) raise("model.CorruptModel", "empty tree");
    f.trees.push_back(std::move(tree));
  }
  auto bags_head = r.line("bags");
  if (bags_head.size() != 2) raise("model.CorruptModel", "malformed bags header");
  const std::size_t n_rows = model_u64(bags_head[1]);
  for (std::size_t t = 0; t < f.params.n_trees; ++t) {
    auto bag = r.line("bag");
    if (bag.size() != 2 || bag[1].size() != n_rows) {
      raise("model.CorruptModel", "malformed bag line");
    }
    std::vector<std::uint8_t> mask(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (bag[1][i] != '0' && bag[1][i] != '1') raise("model.CorruptModel", "bag must be 0/1");
      mask[i] = bag[1][i] == '1';
    }
    f.in_bag.push_back(std::move(mask));
  }
  return f;
}

}  // namespace detail

inline std::string serialize_model(const EqmModel& model) {
  std::string payload;
  payload += std::string("level ") + level_name(model.level) + "\n";
  payload += std::string("without_base_qp ") + (model.without_base_qp ? "1" : "0") + "\n";
  payload += "norm " + format_exact(model.norm.max_frame_width) + " " +
             format_exact(model.norm.max_frame_rate) + " " +
             format_exact(model.norm.low_motion_tau) + " " +
             format_exact(model.norm.global_threshold) + "\n";
  payload += "dict codec h265 0\n";
  payload += "dict pixel_format chroma_index*1000+bit_depth*2+full_range\n";
  payload += "externals " + std::to_string(model.external_columns.size()) + "\n";
  for (const std::string& c : model.external_columns) payload += "external " + c + "\n";
  payload += model.base ? "base present\n" : "base absent\n";
  if (model.base) detail::emit_forest(payload, *model.base);
  payload += "residual\n";
  detail::emit_forest(payload, model.residual);
  payload += "end\n";

  std::string out = "EQM-MODEL " + std::to_string(kModelFileVersion) + "\n";
  out += "checksum " + to_hex16(fnv1a64(payload)) + "\n";
  out += payload;
  return out;
}

inline void validate_model(const EqmModel& model) {
  const bool has_marker = !model.residual_feature_keys.empty() &&
                          model.residual_feature_keys.front() == kBaseOutputKey;
  if (model.base.has_value() != has_marker) {
    raise("model.CorruptModel", "base stage and base_output key disagree");
  }
  if (model.base && model.base->n_features() != model.base_feature_keys.size()) {
    raise("model.CorruptModel", "base key list does not match base forest");
  }
  if (model.residual.n_features() != model.residual_feature_keys.size()) {
    raise("model.CorruptModel", "residual key list does not match residual forest");
  }
}

inline EqmModel parse_model(std::string_view text) {
  const std::size_t first_nl = text.find('\n');
  if (first_nl == std::string_view::npos) raise("model.CorruptModel", "missing header");
  const std::vector<std::string> header = split(text.substr(0, first_nl), ' ');
  if (header.size() != 2 || header[0] != "EQM-MODEL") {
    raise("model.CorruptModel", "not a model file");
  }
  const long long version = parse_int(header[1], "model.CorruptModel");
  if (version != kModelFileVersion) {
    raise("model.VersionMismatch", "file version " + header[1] + ", supported version " +
                                       std::to_string(kModelFileVersion));
  }
  std::string_view rest = text.substr(first_nl + 1);
  const std::size_t second_nl = rest.find('\n');
  if (second_nl == std::string_view::npos) raise("model.CorruptModel", "missing checksum line");
  const std::vector<std::string> sum_line = split(rest.substr(0, second_nl), ' ');
  if (sum_line.size() != 2 || sum_line[0] != "checksum") {
    raise("model.CorruptModel", "missing checksum line");
  }
  const std::string_view payload = rest.substr(second_nl + 1);
  if (to_hex16(fnv1a64(payload)) != sum_line[1]) {
    raise("model.CorruptModel", "checksum mismatch; file is truncated or edited");
  }

  detail::ModelReader r(payload);
  EqmModel model;
  {
    auto t = r.line("level");
    if (t.size() != 2) raise("model.CorruptModel", "malformed level line");
    model.level = level_from_name(t[1]);
  }
  {
    auto t = r.line("without_base_qp");
    if (t.size() != 2 || (t[1] != "0" && t[1] != "1")) {
      raise("model.CorruptModel", "malformed without_base_qp line");
    }
    model.without_base_qp = t[1] == "1";
  }
  {
    auto t = r.line("norm");
    if (t.size() != 5) raise("model.CorruptModel", "malformed norm line");
    model.norm.max_frame_width = detail::model_double(t[1]);
    model.norm.max_frame_rate = detail::model_double(t[2]);
    model.norm.low_motion_tau = detail::model_double(t[3]);
    model.norm.global_threshold = detail::model_double(t[4]);
  }
  r.line("dict");
  r.line("dict");
  {
    auto t = r.line("externals");
    if (t.size() != 2) raise("model.CorruptModel", "malformed externals line");
    const std::uint64_t n = detail::model_u64(t[1]);
    for (std::uint64_t i = 0; i < n; ++i) {
      auto e = r.line("external");
      if (e.size() != 2) raise("model.CorruptModel", "malformed external line");
      model.external_columns.push_back(e[1]);
    }
  }
  {
    auto t = r.line("base");
    if (t.size() != 2 || (t[1] != "present" && t[1] != "absent")) {
      raise("model.CorruptModel", "malformed base line");
    }
    if (t[1] == "present") {
      model.base = detail::read_forest(r);
      model.base_feature_keys = model.base->feature_names;
    }
  }
  r.line("residual");
  model.residual = detail::read_forest(r);
  model.residual_feature_keys = model.residual.feature_names;
  r.line("end");
  if (!r.done()) raise("model.CorruptModel", "trailing content after end marker");
  validate_model(model);
  return model;
}

inline void save_model(const EqmModel& model, const std::string& path) {
  write_file(path, serialize_model(model));
}

inline EqmModel load_model(const std::string& path) {
  return parse_model(read_file(path));
}

}  // namespace eqm
