#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gpbart/design.hpp"
#include "gpbart/rng.hpp"

namespace gpbart {

using NodeId = int;

// x^(var) <= cut goes left.
struct AxisRule {
  int var = 0;
  double cut = 0.0;
  bool operator==(const AxisRule&) const = default;
};

// Level code in `levels` goes left.
struct CategoricalRule {
  int var = 0;
  std::vector<int> levels;
  bool operator==(const CategoricalRule&) const = default;
};

// Splits on the second coordinate of (x^(var_j), x^(var_h)) rotated by
// theta: x_j sin(theta) + x_h cos(theta) <= cut goes left.
struct RotatedRule {
  int var_j = 0;
  int var_h = 1;
  double theta = 0.0;
  double cut = 0.0;
  bool operator==(const RotatedRule&) const = default;
};

using SplitRule = std::variant<AxisRule, CategoricalRule, RotatedRule>;

// Applies the rotation matrix [[cos, -sin], [sin, cos]] to (xj, xh).
inline std::pair<double, double> rotate_pair(double xj, double xh, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {xj * c - xh * s, xj * s + xh * c};
}

// Whether row `row` of `x` goes to the left child. Sets *unknown_level when a
// categorical code was never seen in training; such rows go right.
bool goes_left(const SplitRule& rule, const Eigen::MatrixXd& x, Eigen::Index row,
               bool* unknown_level = nullptr);

struct Node {
  std::optional<SplitRule> rule;
  NodeId parent = -1;
  NodeId left = -1;
  NodeId right = -1;
  int depth = 0;
  std::vector<int> rows;  // training rows reaching the node, ascending

  bool is_leaf() const { return left < 0; }
  bool same_structure(const Node& o) const {
    return rule == o.rule && parent == o.parent && left == o.left &&
           right == o.right && depth == o.depth;
  }
};

// Binary tree stored as a node array; node 0 is the root and children always
// have larger ids than their parent. Row sets are kept on every node so that
// prune and change can recover a parent's rows without re-routing.
class DecisionTree {
 public:
  DecisionTree() : nodes_(1) {}

  static DecisionTree stump(int n_rows);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  bool is_stump() const { return nodes_.size() == 1; }
  int max_depth() const;
  std::vector<NodeId> leaves() const;
  // Internal nodes whose two children are both leaves.
  std::vector<NodeId> prunable() const;

  void grow(NodeId leaf, SplitRule rule, std::vector<int> left_rows,
            std::vector<int> right_rows);
  void prune(NodeId node);
  void change(NodeId node, SplitRule rule, std::vector<int> left_rows,
              std::vector<int> right_rows);

  // Copy with every row set cleared; what posterior draws keep.
  DecisionTree structure_only() const;
  // Route every row of x from the root and rebuild all row sets.
  void assign_rows(const Eigen::MatrixXd& x);
  // Leaf id per training row; -1 for rows reaching no leaf (never, if the
  // partition invariant holds).
  std::vector<NodeId> leaf_assignments(int n_rows) const;

  bool same_structure(const DecisionTree& o) const;

  // Rebuild from a flat node list (ids are positions). Row sets empty.
  static DecisionTree from_nodes(std::vector<Node> nodes);

 private:
  std::vector<Node> nodes_;
};

struct RouteResult {
  NodeId leaf = 0;
  bool unknown_level = false;
};

RouteResult route(const DecisionTree& tree, const Eigen::MatrixXd& x, Eigen::Index row);

// Depth-based prior: sum of log(alpha (1+d)^-beta) over internal nodes and
// log(1 - alpha (1+d)^-beta) over leaves.
double log_tree_prior(const DecisionTree& tree, double alpha, double beta);

enum class MoveKind { kGrow = 0, kGrowProject, kChange, kChangeProject, kPrune };
inline constexpr int kMoveKinds = 5;
inline constexpr std::array<MoveKind, kMoveKinds> kAllMoves = {
    MoveKind::kGrow, MoveKind::kGrowProject, MoveKind::kChange,
    MoveKind::kChangeProject, MoveKind::kPrune};

std::string_view move_name(MoveKind kind);
bool is_projection(MoveKind kind);

struct MoveProbabilities {
  double grow = 0.15;
  double grow_project = 0.15;
  double change = 0.2;
  double change_project = 0.2;
  double prune = 0.3;

  static MoveProbabilities axis_only() { return {0.3, 0.0, 0.4, 0.0, 0.3}; }
  double of(MoveKind k) const;
  bool uses_projection() const { return grow_project > 0.0 || change_project > 0.0; }
};

// Theta grid {k*pi/40 : k = 1..10}.
std::vector<double> default_theta_grid();

struct TreeMoveConfig {
  MoveProbabilities probs;
  std::vector<double> theta_grid = default_theta_grid();
  int min_leaf_size = 1;
};

// Stumps only propose grow-type moves, split between grow and grow-project
// in the ratio of their configured probabilities.
MoveKind sample_move_kind(const DecisionTree& tree, const MoveProbabilities& probs, Rng& rng);

struct MoveProposal {
  MoveKind kind = MoveKind::kGrow;
  NodeId node = -1;  // leaf grown, or internal node changed/pruned
  DecisionTree proposed;
  bool valid = false;
  // Leaves present only in the current tree, and only in the proposed tree.
  std::vector<NodeId> removed_leaves;
  std::vector<NodeId> added_leaves;
};

// Draws a move kind and builds the proposed tree. Invalid proposals (no
// eligible node, no eligible variable pair, or a child below min_leaf_size)
// are returned with valid == false.
MoveProposal propose_move(const DecisionTree& tree, const Design& design,
                          const TreeMoveConfig& config, Rng& rng);

// Same, for a fixed move kind.
MoveProposal propose_move(const DecisionTree& tree, const Design& design,
                          const TreeMoveConfig& config, MoveKind kind, Rng& rng);

// True iff the leaf row sets partition 0..n_rows-1 and every leaf is nonempty.
bool leaves_partition_rows(const DecisionTree& tree, int n_rows);

}  // namespace gpbart
