#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eqm/dataset.hpp"
#include "eqm/errors.hpp"
#include "eqm/log.hpp"
#include "eqm/textio.hpp"

namespace eqm {

// One anchor video rated in both studies.
struct AnchorPair {
  std::string video_id;
  double source_mos = 0.0;
  double target_mos = 0.0;
};

using AnchorSet = std::vector<AnchorPair>;

struct LinearMap {
  double a = 1.0;
  double b = 0.0;
  double r2 = 0.0;
  std::size_t n_anchors = 0;

  double apply(double mos) const { return a * mos + b; }
};

// Ordinary least squares of target on source over the anchor pairs.
inline LinearMap fit_linear_anchor_map(std::span<const AnchorPair> anchors) {
  if (anchors.size() < 2) {
    raise("fusion.TooFewAnchors", "need at least 2 anchors, got " +
                                      std::to_string(anchors.size()));
  }
  double mean_s = 0.0;
  double mean_t = 0.0;
  for (const AnchorPair& p : anchors) {
    mean_s += p.source_mos;
    mean_t += p.target_mos;
  }
  const double n = static_cast<double>(anchors.size());
  mean_s /= n;
  mean_t /= n;
  double var_s = 0.0;
  double cov = 0.0;
  for (const AnchorPair& p : anchors) {
    var_s += (p.source_mos - mean_s) * (p.source_mos - mean_s);
    cov += (p.source_mos - mean_s) * (p.target_mos - mean_t);
  }
  if (var_s == 0.0) {
    raise("fusion.DegenerateAnchors", "all anchor source values are identical");
  }
  LinearMap map;
  map.a = cov / var_s;
  map.b = mean_t - map.a * mean_s;
  map.n_anchors = anchors.size();
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const AnchorPair& p : anchors) {
    const double e = p.target_mos - map.apply(p.source_mos);
    ss_res += e * e;
    ss_tot += (p.target_mos - mean_t) * (p.target_mos - mean_t);
  }
  if (ss_tot > 0.0) {
    map.r2 = 1.0 - ss_res / ss_tot;
  } else {
    map.r2 = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  }
  if (map.r2 < 0.5) {
    log::warn("anchor fit r2 = " + format_sig9(map.r2) + " on " +
              std::to_string(anchors.size()) + " anchors; scales may be incompatible");
  }
  if (map.a <= 0.0) {
    log::warn("anchor fit gain a = " + format_sig9(map.a) +
              " is not positive; source rank order will not be preserved");
  }
  return map;
}

struct FusionResult {
  LabeledDataset fused;
  std::vector<LinearMap> maps;  // one per source, in input order
};

// Maps each source's MOS onto the target scale and concatenates rows. A
// source row sharing a video id with the target is the anchor duplicate and
// is dropped in favor of the target-study row.
inline FusionResult fuse_datasets(
    const LabeledDataset& target,
    std::span<const std::pair<LabeledDataset, AnchorSet>> sources) {
  FusionResult result;
  result.fused = target;
  std::unordered_set<std::string> target_ids(target.video_ids.begin(), target.video_ids.end());
  std::unordered_set<std::string> seen(target_ids);
  for (const auto& [source, anchors] : sources) {
    if (source.feature_names != target.feature_names) {
      raise("fusion.SchemaMismatch", "source and target datasets carry different feature columns");
    }
    const LinearMap map = fit_linear_anchor_map(anchors);
    result.maps.push_back(map);
    std::size_t out_of_scale = 0;
    for (std::size_t r = 0; r < source.size(); ++r) {
      const std::string& id = source.video_ids[r];
      if (target_ids.contains(id)) continue;  // keep the target-study row
      if (!seen.insert(id).second) {
        raise("fusion.DuplicateVideoId", "video '" + id + "' appears in two source datasets");
      }
      const double mapped = map.apply(source.mos[r]);
      if (mapped < 0.0 || mapped > 100.0) ++out_of_scale;
      result.fused.video_ids.push_back(id);
      result.fused.features.push_back(source.features[r]);
      result.fused.mos.push_back(mapped);
    }
    if (out_of_scale > 0) {
      log::warn(std::to_string(out_of_scale) + " fused MOS values fall outside [0,100]");
    }
  }
  return result;
}

// Anchors CSV: video_id,source_mos,target_mos.
inline AnchorSet read_anchors_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) raise("dataset.SyntaxError", "empty anchors CSV");
  line = strip_cr(std::move(line));
  const std::vector<std::string> header = split(line, ',');
  if (header.size() != 3 || header[0] != "video_id" || header[1] != "source_mos" ||
      header[2] != "target_mos") {
    raise("dataset.SchemaMismatch", "anchors CSV header must be video_id,source_mos,target_mos");
  }
  AnchorSet anchors;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != 3) {
      raise("dataset.SyntaxError", "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    detail::check_video_id(fields[0], line_no);
    anchors.push_back({fields[0], detail::parse_csv_double(fields[1], line_no, "source_mos"),
                       detail::parse_csv_double(fields[2], line_no, "target_mos")});
  }
  return anchors;
}

}  // namespace eqm
