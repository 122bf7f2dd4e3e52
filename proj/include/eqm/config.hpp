#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "eqm/errors.hpp"
#include "eqm/forest.hpp"
#include "eqm/model.hpp"
#include "eqm/trace.hpp"
#include "eqm/version.hpp"

namespace eqm {

inline constexpr int kConfigVersion = 1;

// Pipeline-wide knobs shared by the train/predict/crossval subcommands.
// Loaded from a versioned JSON file; unknown keys are rejected so typos
// cannot silently fall back to defaults. The resolved config is echoed into
// every run manifest.
struct PipelineConfig {
  NormConfig norm;
  std::size_t segment_length = 0;  // frames per segment; 0 = whole trace
  ForestParams base;
  ForestParams residual;
  std::uint64_t seed = 0;
  Level level = Level::nr;
  bool without_base_qp = false;
  std::vector<std::string> externals;  // external columns consumed at the FR level

  bool operator==(const PipelineConfig&) const = default;
};

namespace detail {

inline void check_config_keys(const nlohmann::json& obj, std::string_view where,
                              std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || key == k;
    if (!known) {
      raise("config.UnknownKey", std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
inline T config_number(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const nlohmann::json& v = obj.at(key);
  if (!v.is_number()) raise("config.BadValue", std::string(key) + " must be a number");
  if constexpr (std::is_unsigned_v<T>) {
    // JSON stores non-negative integers as unsigned; anything else would wrap.
    if (!v.is_number_unsigned()) {
      raise("config.BadValue", std::string(key) + " must be a non-negative integer");
    }
  }
  return v.get<T>();
}

inline void read_forest_params(const nlohmann::json& obj, std::string_view where,
                               ForestParams& params) {
  check_config_keys(obj, where, {"n_trees", "max_depth", "min_samples_leaf", "mtry"});
  params.n_trees = config_number<std::size_t>(obj, "n_trees", params.n_trees);
  params.max_depth = config_number<std::size_t>(obj, "max_depth", params.max_depth);
  params.min_samples_leaf =
      config_number<std::size_t>(obj, "min_samples_leaf", params.min_samples_leaf);
  params.mtry = config_number<std::size_t>(obj, "mtry", params.mtry);
  if (params.n_trees == 0) raise("config.BadValue", std::string(where) + ".n_trees must be >= 1");
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise("config.SyntaxError", e.what());
  }
  if (!root.is_object()) raise("config.SyntaxError", "config root must be a JSON object");
  detail::check_config_keys(root, "config",
                            {"config_version", "norm", "segment_length", "base", "residual",
                             "seed", "level", "without_base_qp", "externals"});
  if (!root.contains("config_version")) {
    raise("config.VersionMismatch", "config_version is required");
  }
  const nlohmann::json& version = root.at("config_version");
  if (!version.is_number_integer() || version.get<int>() != kConfigVersion) {
    raise("config.VersionMismatch",
          "unsupported config_version (expected " + std::to_string(kConfigVersion) + ")");
  }

  PipelineConfig cfg;
  if (root.contains("norm")) {
    const nlohmann::json& norm = root.at("norm");
    if (!norm.is_object()) raise("config.BadValue", "norm must be an object");
    detail::check_config_keys(
        norm, "norm", {"max_frame_width", "max_frame_rate", "low_motion_tau", "global_threshold"});
    cfg.norm.max_frame_width =
        detail::config_number<double>(norm, "max_frame_width", cfg.norm.max_frame_width);
    cfg.norm.max_frame_rate =
        detail::config_number<double>(norm, "max_frame_rate", cfg.norm.max_frame_rate);
    cfg.norm.low_motion_tau =
        detail::config_number<double>(norm, "low_motion_tau", cfg.norm.low_motion_tau);
    cfg.norm.global_threshold =
        detail::config_number<double>(norm, "global_threshold", cfg.norm.global_threshold);
    if (cfg.norm.max_frame_width <= 0.0 || cfg.norm.max_frame_rate <= 0.0 ||
        cfg.norm.low_motion_tau < 0.0 || cfg.norm.global_threshold <= 0.0 ||
        cfg.norm.global_threshold > 1.0) {
      raise("config.BadValue", "norm values out of range");
    }
  }
  cfg.segment_length = detail::config_number<std::size_t>(root, "segment_length", 0);
  if (root.contains("base")) detail::read_forest_params(root.at("base"), "base", cfg.base);
  if (root.contains("residual")) {
    detail::read_forest_params(root.at("residual"), "residual", cfg.residual);
  }
  cfg.seed = detail::config_number<std::uint64_t>(root, "seed", 0);
  if (root.contains("level")) {
    const nlohmann::json& level = root.at("level");
    if (!level.is_string()) raise("config.BadValue", "level must be a string");
    try {
      cfg.level = level_from_name(level.get<std::string>());
    } catch (const Error&) {
      raise("config.BadValue", "level must be one of metadata, nr, fr");
    }
  }
  if (root.contains("without_base_qp")) {
    const nlohmann::json& flag = root.at("without_base_qp");
    if (!flag.is_boolean()) raise("config.BadValue", "without_base_qp must be a boolean");
    cfg.without_base_qp = flag.get<bool>();
  }
  if (root.contains("externals")) {
    const nlohmann::json& ext = root.at("externals");
    if (!ext.is_array()) raise("config.BadValue", "externals must be an array of column names");
    for (const nlohmann::json& name : ext) {
      if (!name.is_string()) raise("config.BadValue", "externals entries must be strings");
      cfg.externals.push_back(name.get<std::string>());
    }
  }
  return cfg;
}

// Canonical echo used by run manifests; field order is fixed so identical
// configs serialize identically.
inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json out;
  out["config_version"] = kConfigVersion;
  out["level"] = level_name(cfg.level);
  out["seed"] = cfg.seed;
  out["segment_length"] = cfg.segment_length;
  out["without_base_qp"] = cfg.without_base_qp;
  out["norm"] = {{"max_frame_width", cfg.norm.max_frame_width},
                 {"max_frame_rate", cfg.norm.max_frame_rate},
                 {"low_motion_tau", cfg.norm.low_motion_tau},
                 {"global_threshold", cfg.norm.global_threshold}};
  out["base"] = {{"n_trees", cfg.base.n_trees},
                 {"max_depth", cfg.base.max_depth},
                 {"min_samples_leaf", cfg.base.min_samples_leaf},
                 {"mtry", cfg.base.mtry}};
  out["residual"] = {{"n_trees", cfg.residual.n_trees},
                     {"max_depth", cfg.residual.max_depth},
                     {"min_samples_leaf", cfg.residual.min_samples_leaf},
                     {"mtry", cfg.residual.mtry}};
  out["externals"] = cfg.externals;
  return out;
}

inline std::string serialize_pipeline_config(const PipelineConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

}  // namespace eqm
