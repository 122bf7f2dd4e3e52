#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqm/dataset.hpp"
#include "eqm/errors.hpp"
#include "eqm/model.hpp"
#include "eqm/rng.hpp"

namespace eqm {

struct EvalReport {
  double srocc = 0.0;
  double plcc = 0.0;
  double krocc = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // some correlation hit a zero-variance input
  std::vector<EvalReport> per_rep;
};

namespace detail {

// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

// Kendall tau-b by pair counting.
inline std::optional<double> kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t ties_a = 0;
  std::int64_t ties_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) {
        ++ties_a;
        ++ties_b;
      } else if (da == 0.0) {
        ++ties_a;
      } else if (db == 0.0) {
        ++ties_b;
      } else if ((da > 0.0) == (db > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const auto n = static_cast<std::int64_t>(a.size());
  const std::int64_t n0 = n * (n - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(n0 - ties_a)) *
                       std::sqrt(static_cast<double>(n0 - ties_b));
  if (denom == 0.0) return std::nullopt;
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

}  // namespace detail

inline EvalReport correlations(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    raise("evaluation.LengthMismatch", "prediction and truth lengths differ: " +
                                           std::to_string(pred.size()) + " vs " +
                                           std::to_string(truth.size()));
  }
  if (pred.size() < 3) {
    raise("evaluation.TooFewSamples", "need at least 3 samples, got " +
                                          std::to_string(pred.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(pred[i]) || !std::isfinite(truth[i])) {
      raise("evaluation.NonFiniteInput", "non-finite value at row " + std::to_string(i));
    }
  }
  EvalReport r;
  r.n = pred.size();
  const std::optional<double> plcc = detail::pearson(pred, truth);
  const std::vector<double> rank_pred = detail::average_ranks(pred);
  const std::vector<double> rank_truth = detail::average_ranks(truth);
  const std::optional<double> srocc = detail::pearson(rank_pred, rank_truth);
  const std::optional<double> krocc = detail::kendall_tau_b(pred, truth);
  r.plcc = plcc.value_or(0.0);
  r.srocc = srocc.value_or(0.0);
  r.krocc = krocc.value_or(0.0);
  r.degenerate = !plcc || !srocc || !krocc;
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  }
  r.rmse = std::sqrt(se / static_cast<double>(pred.size()));
  return r;
}

struct CrossValOptions {
  TrainOptions train;
  std::size_t folds = 5;
  std::size_t reps = 20;
  std::uint64_t seed = 0;
};

namespace detail {

inline LabeledDataset subset_rows(const LabeledDataset& data, std::span<const std::size_t> rows) {
  LabeledDataset out;
  out.feature_names = data.feature_names;
  out.video_ids.reserve(rows.size());
  out.features.reserve(rows.size());
  out.mos.reserve(rows.size());
  for (const std::size_t r : rows) {
    out.video_ids.push_back(data.video_ids[r]);
    out.features.push_back(data.features[r]);
    out.mos.push_back(data.mos[r]);
  }
  return out;
}

}  // namespace detail

// Repeated k-fold cross validation: per repetition the rows are shuffled with
// a derived seed and split into near-equal folds; held-out predictions are
// pooled over the repetition, then metrics are averaged over repetitions.
inline EvalReport cross_validate(const LabeledDataset& data, const CrossValOptions& opts) {
  if (opts.folds < 2) raise("evaluation.TooFewRows", "need at least 2 folds");
  if (data.size() < opts.folds) {
    raise("evaluation.TooFewRows", "need at least one row per fold: " +
                                       std::to_string(data.size()) + " rows, " +
                                       std::to_string(opts.folds) + " folds");
  }
  const std::size_t n = data.size();
  EvalReport out;
  out.per_rep.reserve(opts.reps);
  for (std::size_t rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t rep_seed = derive_stream(opts.seed, rep);
    Rng rng(rep_seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> pred(n, 0.0);
    for (std::size_t fold = 0; fold < opts.folds; ++fold) {
      const std::size_t begin = fold * n / opts.folds;
      const std::size_t end = (fold + 1) * n / opts.folds;
      std::vector<std::size_t> train_rows;
      train_rows.reserve(n - (end - begin));
      for (std::size_t i = 0; i < n; ++i) {
        if (i < begin || i >= end) train_rows.push_back(perm[i]);
      }
      TrainOptions topts = opts.train;
      const std::uint64_t fold_seed = derive_stream(rep_seed, fold + 1);
      topts.base_params.seed = derive_stream(fold_seed, 1);
      topts.residual_params.seed = derive_stream(fold_seed, 2);
      const EqmModel model = train_eqm(detail::subset_rows(data, train_rows), topts);
      const ModelInputBinding binding = bind_inputs(model, data.feature_names);
      for (std::size_t i = begin; i < end; ++i) {
        pred[perm[i]] = predict_eqm(model, binding, data.features[perm[i]]);
      }
    }
    out.per_rep.push_back(correlations(pred, data.mos));
  }
  for (const EvalReport& rep : out.per_rep) {
    out.srocc += rep.srocc;
    out.plcc += rep.plcc;
    out.krocc += rep.krocc;
    out.rmse += rep.rmse;
    out.degenerate = out.degenerate || rep.degenerate;
  }
  const double reps = static_cast<double>(opts.reps == 0 ? 1 : opts.reps);
  out.srocc /= reps;
  out.plcc /= reps;
  out.krocc /= reps;
  out.rmse /= reps;
  out.n = n;
  return out;
}

}  // namespace eqm
