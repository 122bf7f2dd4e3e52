#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eqm/evaluation.hpp"
#include "support/oracles.hpp"

using namespace eqm;
namespace ts = testsupport;

namespace {

bool raises_code(const std::function<void()>& fn, const std::string& code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

bool rel_close(double a, double b, double tol = 1e-9) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= tol * scale;
}

// Oracle values with the same degenerate-to-zero convention as EvalReport.
struct RefReport {
  double srocc, plcc, krocc, rmse;
};

RefReport ref_report(std::span<const double> a, std::span<const double> b) {
  return {ts::ref_srocc(a, b), ts::ref_pearson(a, b), ts::ref_kendall_tau_b(a, b),
          ts::ref_rmse(a, b)};
}

bool matches_oracle(std::span<const double> a, std::span<const double> b) {
  const EvalReport got = correlations(a, b);
  const RefReport want = ref_report(a, b);
  return rel_close(got.srocc, want.srocc) && rel_close(got.plcc, want.plcc) &&
         rel_close(got.krocc, want.krocc) && rel_close(got.rmse, want.rmse);
}

LabeledDataset cv_dataset(std::size_t n, std::uint64_t seed) {
  LabeledDataset d;
  d.feature_names = standard_feature_columns();
  std::mt19937_64 mt(seed);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::uniform_real_distribution<double> rate(100.0, 5000.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d.feature_names.size());
    for (double& v : row) v = u(mt);
    row[27] = rate(mt);
    d.features.push_back(row);
    d.video_ids.push_back("v" + std::to_string(i));
    d.mos.push_back(row[27] / 50.0 + u(mt) * 0.02);
  }
  return d;
}

}  // namespace

TEST_CASE("correlation metrics match the pair-counting oracles", "[evaluation]") {
  std::mt19937_64 mt(81);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int round = 0; round < 300; ++round) {
    const std::size_t n = 3 + mt() % 60;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(mt);
      b[i] = u(mt);
    }
    // Inject ties on half the rounds.
    if (round % 2 == 0) {
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::floor(a[i] / 10.0);
        b[i] = std::floor(b[i] / 20.0);
      }
    }
    CHECK(matches_oracle(a, b));
  }
}

TEST_CASE("exhaustive small vectors agree with the oracles", "[evaluation]") {
  std::size_t mismatches = 0;
  std::size_t checked = 0;
  for (std::size_t n = 3; n <= 5; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < 2 * n; ++i) combos *= 3;
    std::vector<double> a(n), b(n);
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(c % 3 + 1);
        c /= 3;
      }
      for (std::size_t i = 0; i < n; ++i) {
        b[i] = static_cast<double>(c % 3 + 1);
        c /= 3;
      }
      if (!matches_oracle(a, b)) ++mismatches;
      ++checked;
    }
  }
  CHECK(checked == 729 + 6561 + 59049);
  CHECK(mismatches == 0);
}

TEST_CASE("known correlation values", "[evaluation]") {
  const std::vector<double> x = {1.0, 2.0, 3.0};
  const std::vector<double> y = {1.0, 3.0, 2.0};
  const EvalReport r = correlations(x, y);
  CHECK(rel_close(r.srocc, 0.5));
  CHECK(rel_close(r.krocc, 1.0 / 3.0));
  CHECK(r.n == 3);
  CHECK_FALSE(r.degenerate);

  const EvalReport same = correlations(x, x);
  CHECK(same.srocc == 1.0);
  CHECK(same.plcc == 1.0);
  CHECK(same.krocc == 1.0);
  CHECK(same.rmse == 0.0);

  const std::vector<double> rev = {3.0, 2.0, 1.0};
  const EvalReport anti = correlations(x, rev);
  CHECK(anti.srocc == -1.0);
  CHECK(anti.krocc == -1.0);
}

TEST_CASE("zero-variance inputs are flagged degenerate", "[evaluation]") {
  const std::vector<double> flat = {5.0, 5.0, 5.0, 5.0};
  const std::vector<double> vary = {1.0, 2.0, 3.0, 4.0};
  const EvalReport r = correlations(flat, vary);
  CHECK(r.degenerate);
  CHECK(r.srocc == 0.0);
  CHECK(r.plcc == 0.0);
  CHECK(r.krocc == 0.0);
  CHECK(rel_close(r.rmse, ts::ref_rmse(flat, vary)));
}

TEST_CASE("srocc is invariant under strictly increasing transforms", "[evaluation]") {
  std::mt19937_64 mt(82);
  std::uniform_real_distribution<double> u(1.0, 9.0);
  for (int round = 0; round < 100; ++round) {
    const std::size_t n = 5 + mt() % 40;
    std::vector<double> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = std::floor(u(mt));  // ties included
      truth[i] = u(mt);
    }
    const double base = correlations(pred, truth).srocc;
    std::vector<double> affine(n), cubed(n), expd(n);
    for (std::size_t i = 0; i < n; ++i) {
      affine[i] = 2.0 * pred[i] + 5.0;
      cubed[i] = pred[i] * pred[i] * pred[i];
      expd[i] = std::exp(pred[i] / 2.0);
    }
    CHECK(correlations(affine, truth).srocc == base);
    CHECK(correlations(cubed, truth).srocc == base);
    CHECK(correlations(expd, truth).srocc == base);
  }
}

TEST_CASE("correlations reject malformed input", "[evaluation]") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  CHECK(raises_code([&] { correlations(a, std::vector<double>{1.0, 2.0}); },
                    "evaluation.LengthMismatch"));
  CHECK(raises_code([&] {
    correlations(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0});
  }, "evaluation.TooFewSamples"));
  CHECK(raises_code([&] {
    correlations(std::vector<double>{1.0, std::nan(""), 3.0}, a);
  }, "evaluation.NonFiniteInput"));
}

TEST_CASE("cross validation is deterministic and shaped by its options", "[evaluation]") {
  const LabeledDataset d = cv_dataset(30, 83);
  CrossValOptions opts;
  opts.train.level = Level::metadata;
  opts.train.base_params.n_trees = 6;
  opts.folds = 3;
  opts.reps = 4;
  opts.seed = 5;

  const EvalReport a = cross_validate(d, opts);
  const EvalReport b = cross_validate(d, opts);
  REQUIRE(a.per_rep.size() == 4);
  CHECK(a.n == 30);
  CHECK(a.srocc == b.srocc);
  CHECK(a.rmse == b.rmse);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.per_rep[i].srocc == b.per_rep[i].srocc);
    CHECK(a.per_rep[i].rmse == b.per_rep[i].rmse);
  }

  // The summary is the arithmetic mean of the repetitions.
  double mean_rmse = 0.0;
  for (const EvalReport& rep : a.per_rep) mean_rmse += rep.rmse;
  CHECK(rel_close(a.rmse, mean_rmse / 4.0));

  CrossValOptions reseeded = opts;
  reseeded.seed = 6;
  const EvalReport c = cross_validate(d, reseeded);
  CHECK_FALSE(a.rmse == c.rmse);

  // Metadata features drive the mos here, so even the metadata level learns.
  CHECK(a.srocc > 0.5);

  CHECK(raises_code([&] {
    CrossValOptions bad = opts;
    bad.folds = 1;
    cross_validate(d, bad);
  }, "evaluation.TooFewRows"));
  CHECK(raises_code([&] {
    CrossValOptions bad = opts;
    bad.folds = 31;
    cross_validate(d, bad);
  }, "evaluation.TooFewRows"));
}
