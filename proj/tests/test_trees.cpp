#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gpbart/trees.hpp"
#include "oracles.hpp"

using namespace gpbart;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd uniform_matrix(int n, int p, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = uniform(rng, lo, hi);
  return x;
}

DecisionTree split_once(const Eigen::MatrixXd& x, SplitRule rule) {
  DecisionTree t = DecisionTree::stump(static_cast<int>(x.rows()));
  std::vector<int> l, r;
  for (int i = 0; i < x.rows(); ++i) (goes_left(rule, x, i) ? l : r).push_back(i);
  t.grow(0, rule, l, r);
  return t;
}

}  // namespace

TEST_SUITE("trees") {

TEST_CASE("rotate_pair examples") {
  auto [a, b] = rotate_pair(1.0, 0.0, 0.0);
  CHECK(a == 1.0);
  CHECK(b == 0.0);
  std::tie(a, b) = rotate_pair(1.0, 0.0, kPi / 4);
  CHECK(a == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(b == doctest::Approx(0.70711).epsilon(1e-5));
  std::tie(a, b) = rotate_pair(0.0, 1.0, kPi / 4);
  CHECK(a == doctest::Approx(-0.70711).epsilon(1e-5));
  CHECK(b == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("routing on axis, categorical and rotated rules") {
  Eigen::MatrixXd x(1, 2);
  x << 0.3, 0.0;
  DecisionTree stump = DecisionTree::stump(1);
  CHECK(route(stump, x, 0).leaf == 0);

  DecisionTree axis = split_once(x, AxisRule{0, 0.5});
  CHECK(route(axis, x, 0).leaf == axis.node(0).left);

  Eigen::MatrixXd xr(1, 2);
  xr << 1.0, 0.0;
  const RotatedRule rot{0, 1, kPi / 4, 0.0};
  CHECK_FALSE(goes_left(rot, xr, 0));
  DecisionTree rt = split_once(xr, rot);
  CHECK(route(rt, xr, 0).leaf == rt.node(0).right);

  Eigen::MatrixXd xc(3, 1);
  xc << 0, 1, -1;
  const CategoricalRule cat{0, {1}};
  CHECK_FALSE(goes_left(cat, xc, 0));
  CHECK(goes_left(cat, xc, 1));
  bool unknown = false;
  CHECK_FALSE(goes_left(cat, xc, 2, &unknown));
  CHECK(unknown);
}

TEST_CASE("log_tree_prior examples") {
  DecisionTree stump = DecisionTree::stump(4);
  CHECK(log_tree_prior(stump, 0.95, 2.0) == doctest::Approx(-2.99573).epsilon(1e-5));
  Eigen::MatrixXd x(4, 1);
  x << 0.1, 0.2, 0.7, 0.9;
  const DecisionTree t = split_once(x, AxisRule{0, 0.5});
  CHECK(log_tree_prior(t, 0.95, 2.0) == doctest::Approx(-0.59360).epsilon(1e-5));
  CHECK(log_tree_prior(t, 0.95, 2.0) == doctest::Approx(oracle::tree_prior(t, 0.95, 2.0)));
}

TEST_CASE("tree prior tends to -inf as alpha shrinks") {
  Eigen::MatrixXd x(4, 1);
  x << 0.1, 0.2, 0.7, 0.9;
  const DecisionTree t = split_once(x, AxisRule{0, 0.5});
  double prev = log_tree_prior(t, 0.5, 2.0);
  for (double a : {1e-1, 1e-2, 1e-4, 1e-8}) {
    const double v = log_tree_prior(t, a, 2.0);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < -15);
}

TEST_CASE("prune on a stump is invalid") {
  Rng rng(1);
  const Design d = continuous_design(uniform_matrix(10, 2, rng));
  const auto prop = propose_move(DecisionTree::stump(10), d, {}, MoveKind::kPrune, rng);
  CHECK_FALSE(prop.valid);
}

TEST_CASE("grow then prune restores the tree") {
  Rng rng(2);
  const Design d = continuous_design(uniform_matrix(30, 3, rng));
  DecisionTree t = DecisionTree::stump(30);
  for (int i = 0; i < 3; ++i) {
    auto g = propose_move(t, d, {}, MoveKind::kGrow, rng);
    if (g.valid) t = g.proposed;
  }
  for (MoveKind kind : {MoveKind::kGrow, MoveKind::kGrowProject}) {
    const auto g = propose_move(t, d, {}, kind, rng);
    REQUIRE(g.valid);
    DecisionTree back = g.proposed;
    back.prune(g.node);
    CHECK(back.same_structure(t));
    CHECK(leaves_partition_rows(back, 30));
  }
}

TEST_CASE("grow-project needs two rotation columns") {
  Rng rng(3);
  const Design d = continuous_design(uniform_matrix(20, 1, rng));
  for (int i = 0; i < 20; ++i)
    CHECK_FALSE(propose_move(DecisionTree::stump(20), d, {}, MoveKind::kGrowProject, rng).valid);
}

TEST_CASE("stumps propose only grow-type moves") {
  Rng rng(4);
  const DecisionTree stump = DecisionTree::stump(5);
  int grow = 0;
  for (int i = 0; i < 2000; ++i) {
    const MoveKind k = sample_move_kind(stump, {}, rng);
    CHECK((k == MoveKind::kGrow || k == MoveKind::kGrowProject));
    grow += k == MoveKind::kGrow;
  }
  CHECK(std::abs(grow / 2000.0 - 0.5) < 3 * std::sqrt(0.25 / 2000));
  for (int i = 0; i < 200; ++i)
    CHECK(sample_move_kind(stump, MoveProbabilities::axis_only(), rng) == MoveKind::kGrow);
}

TEST_CASE("categorical rule splits one observed level from the rest") {
  Rng rng(5);
  Design d;
  d.x.resize(12, 1);
  for (int i = 0; i < 12; ++i) d.x(i, 0) = i % 3;
  d.kinds = {ColumnKind::kCategorical};
  d.levels = {3};
  for (int i = 0; i < 50; ++i) {
    const auto prop = propose_move(DecisionTree::stump(12), d, {}, MoveKind::kGrow, rng);
    REQUIRE(prop.valid);
    const auto& rule = std::get<CategoricalRule>(*prop.proposed.node(0).rule);
    CHECK(rule.levels.size() == 1);
    CHECK(prop.proposed.node(prop.proposed.node(0).left).rows.size() == 4);
  }
}

TEST_CASE("minimum leaf size rejects small children") {
  Rng rng(6);
  const Design d = continuous_design(uniform_matrix(6, 2, rng));
  TreeMoveConfig cfg;
  cfg.min_leaf_size = 4;
  for (int i = 0; i < 50; ++i)
    CHECK_FALSE(propose_move(DecisionTree::stump(6), d, cfg, MoveKind::kGrow, rng).valid);
}

TEST_CASE("axis routing is unchanged by min-max rescaling of data and cutpoints") {
  Rng rng(7);
  const Eigen::MatrixXd raw = uniform_matrix(200, 2, rng, -3.0, 8.0);
  Eigen::MatrixXd scaled = raw;
  const Eigen::RowVectorXd lo = raw.colwise().minCoeff(), hi = raw.colwise().maxCoeff();
  for (int j = 0; j < 2; ++j) scaled.col(j) = (raw.col(j).array() - lo(j)) / (hi(j) - lo(j));
  for (int trial = 0; trial < 100; ++trial) {
    const int var = static_cast<int>(uniform_index(rng, 2));
    const double cut = uniform(rng, lo(var), hi(var));
    const AxisRule a{var, cut};
    const AxisRule b{var, (cut - lo(var)) / (hi(var) - lo(var))};
    for (int i = 0; i < raw.rows(); ++i) {
      // Rows within rounding of the cut can legitimately differ.
      if (std::abs(raw(i, var) - cut) < 1e-12 * (hi(var) - lo(var))) continue;
      CHECK(goes_left(a, raw, i) == goes_left(b, scaled, i));
    }
  }
}

TEST_CASE("from_nodes rejects inconsistent node lists") {
  std::vector<Node> nodes(2);
  nodes[0].left = 1;
  nodes[0].right = 5;
  nodes[0].rule = AxisRule{0, 0.5};
  CHECK_THROWS(DecisionTree::from_nodes(nodes));
}

}  // TEST_SUITE
