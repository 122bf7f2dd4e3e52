#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "eqm/forest.hpp"
#include "support/oracles.hpp"

using namespace eqm;

namespace {

bool raises_code(const std::function<void()>& fn, const std::string& code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// y = x0 with distractor noise features.
struct Toy {
  Matrix x;
  std::vector<double> y;
};

Toy linear_toy(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 mt(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = u(mt);
    t.x.push_back({x0, u(mt), u(mt)});
    t.y.push_back(x0);
  }
  return t;
}

}  // namespace

TEST_CASE("identical params give identical forests", "[forest]") {
  const Toy t = linear_toy(80, 5);
  ForestParams p;
  p.n_trees = 25;
  p.seed = 99;
  const Forest a = fit_forest(t.x, t.y, p);
  const Forest b = fit_forest(t.x, t.y, p);
  CHECK(a == b);

  ForestParams q = p;
  q.seed = 100;
  const Forest c = fit_forest(t.x, t.y, q);
  CHECK_FALSE(a.trees == c.trees);
}

TEST_CASE("constant targets predict exactly", "[forest]") {
  Matrix x;
  std::vector<double> y;
  std::mt19937_64 mt(6);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 40; ++i) {
    x.push_back({u(mt), u(mt)});
    y.push_back(4.25);
  }
  ForestParams p;
  p.n_trees = 10;
  p.seed = 1;
  const Forest f = fit_forest(x, y, p);
  for (const std::vector<double>& row : x) CHECK(predict(f, row) == 4.25);
  CHECK(predict(f, std::vector<double>{100.0, -100.0}) == 4.25);
}

TEST_CASE("a strong single feature dominates", "[forest]") {
  const Toy t = linear_toy(200, 7);
  ForestParams p;
  p.n_trees = 60;
  p.seed = 3;
  p.mtry = 3;  // let every split see x0
  const Forest f = fit_forest(t.x, t.y, p, {"x0", "noise1", "noise2"});

  std::vector<double> preds;
  for (const std::vector<double>& row : t.x) preds.push_back(predict(f, row));
  const double rmse = testsupport::ref_rmse(preds, t.y);
  const double spread = testsupport::ref_std_pop(t.y);
  CHECK(rmse < 0.1 * spread);

  const auto importance = feature_importance(f);
  REQUIRE(importance.size() == 3);
  CHECK(importance[0].first == "x0");
  CHECK(importance[0].second > 0.9);
  double total = 0.0;
  for (const auto& [name, v] : importance) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("out-of-bag predictions skip in-bag trees", "[forest]") {
  const Toy t = linear_toy(60, 11);
  ForestParams p;
  p.n_trees = 40;
  p.seed = 17;
  const Forest f = fit_forest(t.x, t.y, p);
  const std::vector<std::optional<double>> oob = oob_predict(f, t.x);
  REQUIRE(oob.size() == t.x.size());
  std::size_t present = 0;
  for (std::size_t r = 0; r < oob.size(); ++r) {
    if (!oob[r]) continue;
    ++present;
    // Recompute from the stored bags.
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t tree = 0; tree < f.trees.size(); ++tree) {
      if (f.in_bag[tree][r]) continue;
      sum += predict_tree(f.trees[tree], t.x[r]);
      ++count;
    }
    REQUIRE(count > 0);
    CHECK(*oob[r] == sum / static_cast<double>(count));
  }
  // With 40 bootstrap rounds nearly every row is out of bag somewhere.
  CHECK(present > 50);

  CHECK(raises_code([&] { oob_predict(f, Matrix(10, std::vector<double>(3, 0.0))); },
                    "forest.DimensionMismatch"));
}

TEST_CASE("mtry defaults to a third of the features", "[forest]") {
  Matrix x;
  std::vector<double> y;
  std::mt19937_64 mt(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> row(7);
    for (double& v : row) v = u(mt);
    x.push_back(row);
    y.push_back(u(mt));
  }
  ForestParams p;
  p.n_trees = 2;
  const Forest f = fit_forest(x, y, p);
  CHECK(f.params.mtry == 3);  // ceil(7 / 3)

  p.mtry = 99;
  const Forest clamped = fit_forest(x, y, p);
  CHECK(clamped.params.mtry == 7);
}

TEST_CASE("fit and predict reject malformed input", "[forest]") {
  const Toy t = linear_toy(20, 2);
  ForestParams p;
  p.n_trees = 3;
  CHECK(raises_code([&] { fit_forest(t.x, std::vector<double>(19, 0.0), p); },
                    "forest.DimensionMismatch"));
  CHECK(raises_code([&] { fit_forest(Matrix{{1.0}}, std::vector<double>{1.0}, p); },
                    "forest.DimensionMismatch"));
  CHECK(raises_code([&] {
    Matrix ragged = t.x;
    ragged[3].pop_back();
    fit_forest(ragged, t.y, p);
  }, "forest.DimensionMismatch"));
  CHECK(raises_code([&] {
    std::vector<double> y = t.y;
    y[0] = std::nan("");
    fit_forest(t.x, y, p);
  }, "forest.NonFiniteInput"));
  CHECK(raises_code([&] {
    Matrix x = t.x;
    x[1][1] = std::numeric_limits<double>::infinity();
    fit_forest(x, t.y, p);
  }, "forest.NonFiniteInput"));

  const Forest f = fit_forest(t.x, t.y, p);
  CHECK(raises_code([&] { predict(f, std::vector<double>{1.0}); }, "forest.DimensionMismatch"));
  CHECK(raises_code([&] { predict(f, std::vector<double>{1.0, 2.0, std::nan("")}); },
                    "forest.NonFiniteInput"));
}

TEST_CASE("leaves respect the minimum sample count", "[forest]") {
  const Toy t = linear_toy(50, 13);
  ForestParams p;
  p.n_trees = 8;
  p.seed = 4;
  p.min_samples_leaf = 5;
  p.max_depth = 3;
  const Forest f = fit_forest(t.x, t.y, p);
  for (const Tree& tree : f.trees) {
    std::size_t depth_max = 0;
    // Walk each tree: depth of any node stays within max_depth.
    std::function<void(std::int32_t, std::size_t)> walk = [&](std::int32_t node, std::size_t d) {
      depth_max = std::max(depth_max, d);
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      if (nd.feature < 0) return;
      walk(nd.left, d + 1);
      walk(nd.right, d + 1);
    };
    walk(0, 0);
    CHECK(depth_max <= 3);
  }
}
