#include "gpbart/trees.hpp"

#include <algorithm>
#include <stdexcept>

namespace gpbart {

bool goes_left(const SplitRule& rule, const Eigen::MatrixXd& x, Eigen::Index row,
               bool* unknown_level) {
  return std::visit(
      [&](const auto& r) -> bool {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, AxisRule>) {
          return x(row, r.var) <= r.cut;
        } else if constexpr (std::is_same_v<R, CategoricalRule>) {
          const double v = x(row, r.var);
          if (v < 0.0) {
            if (unknown_level) *unknown_level = true;
            return false;
          }
          const int code = static_cast<int>(v);
          return std::find(r.levels.begin(), r.levels.end(), code) != r.levels.end();
        } else {
          return rotate_pair(x(row, r.var_j), x(row, r.var_h), r.theta).second <= r.cut;
        }
      },
      rule);
}

DecisionTree DecisionTree::stump(int n_rows) {
  DecisionTree t;
  t.nodes_[0].rows.resize(n_rows);
  for (int i = 0; i < n_rows; ++i) t.nodes_[0].rows[i] = i;
  return t;
}

int DecisionTree::max_depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<NodeId> DecisionTree::leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < static_cast<NodeId>(nodes_.size()); ++i)
    if (nodes_[i].is_leaf()) out.push_back(i);
  return out;
}

std::vector<NodeId> DecisionTree::prunable() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < static_cast<NodeId>(nodes_.size()); ++i) {
    const auto& n = nodes_[i];
    if (!n.is_leaf() && nodes_[n.left].is_leaf() && nodes_[n.right].is_leaf())
      out.push_back(i);
  }
  return out;
}

void DecisionTree::grow(NodeId leaf, SplitRule rule, std::vector<int> left_rows,
                        std::vector<int> right_rows) {
  if (!nodes_.at(leaf).is_leaf()) throw std::logic_error("grow on an internal node");
  const NodeId l = static_cast<NodeId>(nodes_.size());
  const int depth = nodes_[leaf].depth + 1;
  Node left_node;
  left_node.parent = leaf;
  left_node.depth = depth;
  left_node.rows = std::move(left_rows);
  Node right_node = left_node;
  right_node.rows = std::move(right_rows);
  nodes_.push_back(std::move(left_node));
  nodes_.push_back(std::move(right_node));
  nodes_[leaf].rule = std::move(rule);
  nodes_[leaf].left = l;
  nodes_[leaf].right = l + 1;
}

void DecisionTree::prune(NodeId node) {
  Node& n = nodes_.at(node);
  if (n.is_leaf() || !nodes_[n.left].is_leaf() || !nodes_[n.right].is_leaf())
    throw std::logic_error("prune requires an internal node with two leaf children");
  const NodeId a = std::min(n.left, n.right);
  const NodeId b = std::max(n.left, n.right);
  n.rule.reset();
  n.left = n.right = -1;

  std::vector<NodeId> remap(nodes_.size(), -1);
  std::vector<Node> kept;
  kept.reserve(nodes_.size() - 2);
  for (NodeId i = 0; i < static_cast<NodeId>(nodes_.size()); ++i) {
    if (i == a || i == b) continue;
    remap[i] = static_cast<NodeId>(kept.size());
    kept.push_back(std::move(nodes_[i]));
  }
  for (auto& k : kept) {
    if (k.parent >= 0) k.parent = remap[k.parent];
    if (k.left >= 0) {
      k.left = remap[k.left];
      k.right = remap[k.right];
    }
  }
  nodes_ = std::move(kept);
}

void DecisionTree::change(NodeId node, SplitRule rule, std::vector<int> left_rows,
                          std::vector<int> right_rows) {
  Node& n = nodes_.at(node);
  if (n.is_leaf() || !nodes_[n.left].is_leaf() || !nodes_[n.right].is_leaf())
    throw std::logic_error("change requires an internal node with two leaf children");
  n.rule = std::move(rule);
  nodes_[n.left].rows = std::move(left_rows);
  nodes_[n.right].rows = std::move(right_rows);
}

DecisionTree DecisionTree::structure_only() const {
  DecisionTree t = *this;
  for (auto& n : t.nodes_) {
    n.rows.clear();
    n.rows.shrink_to_fit();
  }
  return t;
}

void DecisionTree::assign_rows(const Eigen::MatrixXd& x) {
  for (auto& n : nodes_) n.rows.clear();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    NodeId cur = 0;
    nodes_[0].rows.push_back(static_cast<int>(i));
    while (!nodes_[cur].is_leaf()) {
      cur = goes_left(*nodes_[cur].rule, x, i) ? nodes_[cur].left : nodes_[cur].right;
      nodes_[cur].rows.push_back(static_cast<int>(i));
    }
  }
}

std::vector<NodeId> DecisionTree::leaf_assignments(int n_rows) const {
  std::vector<NodeId> out(n_rows, -1);
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id)
    if (nodes_[id].is_leaf())
      for (int r : nodes_[id].rows) out[r] = id;
  return out;
}

bool DecisionTree::same_structure(const DecisionTree& o) const {
  if (nodes_.size() != o.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!nodes_[i].same_structure(o.nodes_[i])) return false;
  return true;
}

DecisionTree DecisionTree::from_nodes(std::vector<Node> nodes) {
  if (nodes.empty()) throw std::invalid_argument("tree needs at least a root node");
  const auto n = static_cast<NodeId>(nodes.size());
  for (NodeId i = 0; i < n; ++i) {
    const Node& nd = nodes[i];
    const bool has_children = nd.left >= 0 || nd.right >= 0;
    if (has_children != nd.rule.has_value())
      throw std::invalid_argument("node " + std::to_string(i) +
                                  ": split rule and children disagree");
    if (has_children) {
      if (nd.left <= i || nd.right <= i || nd.left >= n || nd.right >= n)
        throw std::invalid_argument("node " + std::to_string(i) + ": bad child ids");
      if (nodes[nd.left].parent != i || nodes[nd.right].parent != i)
        throw std::invalid_argument("node " + std::to_string(i) + ": child parent mismatch");
    }
  }
  DecisionTree t;
  t.nodes_ = std::move(nodes);
  return t;
}

RouteResult route(const DecisionTree& tree, const Eigen::MatrixXd& x, Eigen::Index row) {
  RouteResult res;
  NodeId cur = 0;
  while (!tree.node(cur).is_leaf()) {
    const Node& n = tree.node(cur);
    cur = goes_left(*n.rule, x, row, &res.unknown_level) ? n.left : n.right;
  }
  res.leaf = cur;
  return res;
}

double log_tree_prior(const DecisionTree& tree, double alpha, double beta) {
  double lp = 0.0;
  for (const auto& n : tree.nodes()) {
    const double split = alpha * std::pow(1.0 + n.depth, -beta);
    lp += n.is_leaf() ? std::log1p(-split) : std::log(split);
  }
  return lp;
}

std::string_view move_name(MoveKind kind) {
  switch (kind) {
    case MoveKind::kGrow: return "grow";
    case MoveKind::kGrowProject: return "grow-project";
    case MoveKind::kChange: return "change";
    case MoveKind::kChangeProject: return "change-project";
    case MoveKind::kPrune: return "prune";
  }
  return "?";
}

bool is_projection(MoveKind kind) {
  return kind == MoveKind::kGrowProject || kind == MoveKind::kChangeProject;
}

double MoveProbabilities::of(MoveKind k) const {
  switch (k) {
    case MoveKind::kGrow: return grow;
    case MoveKind::kGrowProject: return grow_project;
    case MoveKind::kChange: return change;
    case MoveKind::kChangeProject: return change_project;
    case MoveKind::kPrune: return prune;
  }
  return 0.0;
}

std::vector<double> default_theta_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(k * std::numbers::pi / 40.0);
  return g;
}

MoveKind sample_move_kind(const DecisionTree& tree, const MoveProbabilities& probs, Rng& rng) {
  const double u = uniform01(rng);
  if (tree.is_stump()) {
    const double total = probs.grow + probs.grow_project;
    return u * total < probs.grow ? MoveKind::kGrow : MoveKind::kGrowProject;
  }
  double acc = 0.0;
  for (MoveKind k : kAllMoves) {
    acc += probs.of(k);
    if (u < acc) return k;
  }
  return MoveKind::kPrune;
}

namespace {

std::optional<SplitRule> draw_axis_rule(const Design& design, const std::vector<int>& rows,
                                        Rng& rng) {
  const int var = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(design.cols())));
  if (design.is_continuous(var)) {
    double lo = design.x(rows[0], var), hi = lo;
    for (int r : rows) {
      lo = std::min(lo, design.x(r, var));
      hi = std::max(hi, design.x(r, var));
    }
    if (!(hi > lo)) return std::nullopt;
    return AxisRule{var, uniform(rng, lo, hi)};
  }
  std::vector<int> seen;
  for (int r : rows) {
    const int code = static_cast<int>(design.x(r, var));
    if (code >= 0 && std::find(seen.begin(), seen.end(), code) == seen.end())
      seen.push_back(code);
  }
  if (seen.size() < 2) return std::nullopt;
  std::sort(seen.begin(), seen.end());
  return CategoricalRule{var, {seen[uniform_index(rng, seen.size())]}};
}

std::optional<SplitRule> draw_rotated_rule(const Design& design, const std::vector<int>& rows,
                                           const std::vector<double>& theta_grid, Rng& rng) {
  const auto& cols = design.rotation_columns;
  if (cols.size() < 2 || theta_grid.empty()) return std::nullopt;
  const std::size_t a = uniform_index(rng, cols.size());
  std::size_t b = uniform_index(rng, cols.size() - 1);
  if (b >= a) ++b;
  const int j = cols[a];
  const int h = cols[b];
  const double theta = theta_grid[uniform_index(rng, theta_grid.size())];
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int r : rows) {
    const double v = rotate_pair(design.x(r, j), design.x(r, h), theta).second;
    if (first) {
      lo = hi = v;
      first = false;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) return std::nullopt;
  return RotatedRule{j, h, theta, uniform(rng, lo, hi)};
}

std::pair<std::vector<int>, std::vector<int>> split_rows(const SplitRule& rule,
                                                         const Design& design,
                                                         const std::vector<int>& rows) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (int r : rows) (goes_left(rule, design.x, r) ? out.first : out.second).push_back(r);
  return out;
}

}  // namespace

MoveProposal propose_move(const DecisionTree& tree, const Design& design,
                          const TreeMoveConfig& config, Rng& rng) {
  return propose_move(tree, design, config, sample_move_kind(tree, config.probs, rng), rng);
}

MoveProposal propose_move(const DecisionTree& tree, const Design& design,
                          const TreeMoveConfig& config, MoveKind kind, Rng& rng) {
  MoveProposal prop;
  prop.kind = kind;
  const auto min_leaf = static_cast<std::size_t>(std::max(1, config.min_leaf_size));

  auto draw_rule = [&](const std::vector<int>& rows) {
    return is_projection(kind) ? draw_rotated_rule(design, rows, config.theta_grid, rng)
                               : draw_axis_rule(design, rows, rng);
  };

  switch (kind) {
    case MoveKind::kGrow:
    case MoveKind::kGrowProject: {
      const auto leaves = tree.leaves();
      const NodeId leaf = leaves[uniform_index(rng, leaves.size())];
      prop.node = leaf;
      const auto& rows = tree.node(leaf).rows;
      if (rows.size() < 2 * min_leaf) return prop;
      auto rule = draw_rule(rows);
      if (!rule) return prop;
      auto [l, r] = split_rows(*rule, design, rows);
      if (l.size() < min_leaf || r.size() < min_leaf) return prop;
      prop.proposed = tree;
      prop.proposed.grow(leaf, std::move(*rule), std::move(l), std::move(r));
      prop.removed_leaves = {leaf};
      const auto& n = prop.proposed.node(leaf);
      prop.added_leaves = {n.left, n.right};
      prop.valid = true;
      return prop;
    }
    case MoveKind::kChange:
    case MoveKind::kChangeProject: {
      const auto cand = tree.prunable();
      if (cand.empty()) return prop;
      const NodeId node = cand[uniform_index(rng, cand.size())];
      prop.node = node;
      auto rule = draw_rule(tree.node(node).rows);
      if (!rule) return prop;
      auto [l, r] = split_rows(*rule, design, tree.node(node).rows);
      if (l.size() < min_leaf || r.size() < min_leaf) return prop;
      prop.proposed = tree;
      prop.proposed.change(node, std::move(*rule), std::move(l), std::move(r));
      prop.removed_leaves = {tree.node(node).left, tree.node(node).right};
      prop.added_leaves = prop.removed_leaves;
      prop.valid = true;
      return prop;
    }
    case MoveKind::kPrune: {
      const auto cand = tree.prunable();
      if (cand.empty()) return prop;
      const NodeId node = cand[uniform_index(rng, cand.size())];
      prop.node = node;
      prop.proposed = tree;
      prop.proposed.prune(node);
      prop.removed_leaves = {tree.node(node).left, tree.node(node).right};
      prop.added_leaves = {node};  // children ids exceed the parent's, so it keeps its id
      prop.valid = true;
      return prop;
    }
  }
  return prop;
}

bool leaves_partition_rows(const DecisionTree& tree, int n_rows) {
  std::vector<int> hits(n_rows, 0);
  for (NodeId id : tree.leaves()) {
    const auto& rows = tree.node(id).rows;
    if (rows.empty()) return false;
    for (int r : rows) {
      if (r < 0 || r >= n_rows) return false;
      ++hits[r];
    }
  }
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

}  // namespace gpbart
