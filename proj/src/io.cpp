#include "gpbart/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gpbart/errors.hpp"
#include "gpbart/rng.hpp"

namespace gpbart {

using nlohmann::json;

int Schema::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Comma-separated fields with optional double quoting ("" escapes a quote).
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // (line number, cells)
};

CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split_csv(s);
      continue;
    }
    t.rows.emplace_back(line_no, split_csv(s));
  }
  if (t.header.empty()) throw ValidationError("'" + path + "' has no header row");
  std::map<std::string, int> seen;
  for (const auto& h : t.header)
    if (seen[h]++) throw ValidationError("duplicate column '" + h + "' in '" + path + "'");
  return t;
}

int header_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

// Fills x/y from table rows; `encode` maps (column, cell) to a code or
// returns false when the cell is rejected.
template <typename Encode>
Dataset build_dataset(const CsvTable& table, Schema schema, const std::vector<int>& feature_pos,
                      int target_pos, Encode encode) {
  const auto p = static_cast<Eigen::Index>(schema.names.size());
  std::vector<double> xs;
  std::vector<double> ys;
  Dataset ds;
  for (const auto& [line_no, cells] : table.rows) {
    if (cells.size() != table.header.size()) {
      ds.rejected.push_back("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " cells, found " +
                            std::to_string(cells.size()));
      continue;
    }
    std::vector<double> row(static_cast<std::size_t>(p));
    std::string problem;
    for (Eigen::Index j = 0; j < p && problem.empty(); ++j) {
      const std::string& cell = cells[static_cast<std::size_t>(feature_pos[j])];
      if (cell.empty())
        problem = "missing value in column '" + schema.names[j] + "'";
      else if (!encode(static_cast<int>(j), cell, row[static_cast<std::size_t>(j)]))
        problem = "cannot parse '" + cell + "' in column '" + schema.names[j] + "'";
    }
    double yv = 0.0;
    if (problem.empty() && target_pos >= 0) {
      const std::string& cell = cells[static_cast<std::size_t>(target_pos)];
      if (cell.empty())
        problem = "missing value in column '" + schema.target + "'";
      else if (!parse_double(cell, yv))
        problem = "cannot parse '" + cell + "' in column '" + schema.target + "'";
    }
    if (!problem.empty()) {
      ds.rejected.push_back("line " + std::to_string(line_no) + ": " + problem);
      continue;
    }
    xs.insert(xs.end(), row.begin(), row.end());
    if (target_pos >= 0) ys.push_back(yv);
  }
  const auto n = static_cast<Eigen::Index>(p ? xs.size() / static_cast<std::size_t>(p)
                                             : (target_pos >= 0 ? ys.size() : 0));
  if (n == 0) {
    std::string msg = "no usable rows";
    if (!ds.rejected.empty())
      msg += " (" + std::to_string(ds.rejected.size()) + " rejected; first: " +
             ds.rejected.front() + ")";
    throw ValidationError(msg);
  }
  ds.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, p);
  if (target_pos >= 0) ds.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  ds.schema = std::move(schema);
  return ds;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target,
                 const std::vector<std::string>& categorical,
                 const std::vector<std::string>& ignore) {
  const CsvTable table = read_table(path);
  const int target_pos = header_index(table.header, target);
  if (target_pos < 0) throw ValidationError("target column '" + target + "' not found");
  for (const auto& c : categorical) {
    if (c == target) throw ValidationError("target column '" + target + "' cannot be categorical");
    if (header_index(table.header, c) < 0)
      throw ValidationError("categorical column '" + c + "' not found");
  }
  for (const auto& c : ignore) {
    if (c == target) throw ValidationError("target column '" + target + "' cannot be ignored");
    if (header_index(table.header, c) < 0) throw ValidationError("ignored column '" + c + "' not found");
  }
  Schema schema;
  schema.target = target;
  std::vector<int> pos;
  for (int i = 0; i < static_cast<int>(table.header.size()); ++i) {
    if (i == target_pos) continue;
    const std::string& name = table.header[static_cast<std::size_t>(i)];
    if (std::find(ignore.begin(), ignore.end(), name) != ignore.end()) continue;
    const bool cat = std::find(categorical.begin(), categorical.end(), name) != categorical.end();
    schema.names.push_back(name);
    schema.kinds.push_back(cat ? ColumnKind::kCategorical : ColumnKind::kContinuous);
    schema.levels.emplace_back();
    pos.push_back(i);
  }
  // Dictionaries grow in order of first appearance among accepted cells.
  std::vector<std::map<std::string, int>> dict(schema.names.size());
  std::vector<std::vector<std::string>> order(schema.names.size());
  auto encode = [&](int j, const std::string& cell, double& v) {
    if (schema.kinds[static_cast<std::size_t>(j)] == ColumnKind::kContinuous)
      return parse_double(cell, v);
    auto& d = dict[static_cast<std::size_t>(j)];
    const auto it = d.find(cell);
    if (it != d.end()) {
      v = it->second;
    } else {
      v = static_cast<double>(d.size());
      d.emplace(cell, static_cast<int>(d.size()));
      order[static_cast<std::size_t>(j)].push_back(cell);
    }
    return true;
  };
  Dataset ds = build_dataset(table, schema, pos, target_pos, encode);
  // A row rejected after its categorical cells were encoded can leave
  // unused levels behind; recompute dictionaries from the kept rows.
  for (std::size_t j = 0; j < ds.schema.names.size(); ++j) {
    if (ds.schema.kinds[j] != ColumnKind::kCategorical) continue;
    std::vector<int> remap(order[j].size(), -1);
    auto& levels = ds.schema.levels[j];
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
      const int code = static_cast<int>(ds.x(i, static_cast<Eigen::Index>(j)));
      if (remap[static_cast<std::size_t>(code)] < 0) {
        remap[static_cast<std::size_t>(code)] = static_cast<int>(levels.size());
        levels.push_back(order[j][static_cast<std::size_t>(code)]);
      }
      ds.x(i, static_cast<Eigen::Index>(j)) = remap[static_cast<std::size_t>(code)];
    }
  }
  return ds;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  const CsvTable table = read_table(path);
  std::vector<int> pos;
  for (const auto& name : schema.names) {
    const int i = header_index(table.header, name);
    if (i < 0) throw ValidationError("schema mismatch: column '" + name + "' not found in '" + path + "'");
    pos.push_back(i);
  }
  const int target_pos = header_index(table.header, schema.target);
  std::vector<std::map<std::string, int>> dict(schema.names.size());
  for (std::size_t j = 0; j < schema.names.size(); ++j)
    for (std::size_t l = 0; l < schema.levels[j].size(); ++l)
      dict[j].emplace(schema.levels[j][l], static_cast<int>(l));
  auto encode = [&](int j, const std::string& cell, double& v) {
    const auto ju = static_cast<std::size_t>(j);
    if (schema.kinds[ju] == ColumnKind::kContinuous) return parse_double(cell, v);
    const auto it = dict[ju].find(cell);
    v = it == dict[ju].end() ? -1.0 : it->second;
    return true;
  };
  return build_dataset(table, schema, pos, target_pos, encode);
}

NormalizationTransform NormalizationTransform::fit(const Dataset& train) {
  NormalizationTransform tr;
  const Eigen::Index p = train.x.cols();
  tr.kinds = train.schema.kinds;
  tr.x_min.assign(static_cast<std::size_t>(p), 0.0);
  tr.x_max.assign(static_cast<std::size_t>(p), 1.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (tr.kinds[static_cast<std::size_t>(j)] != ColumnKind::kContinuous) continue;
    const double lo = train.x.col(j).minCoeff();
    const double hi = train.x.col(j).maxCoeff();
    if (!(hi > lo))
      throw ValidationError("column '" + train.schema.names[static_cast<std::size_t>(j)] +
                            "' is constant");
    tr.x_min[static_cast<std::size_t>(j)] = lo;
    tr.x_max[static_cast<std::size_t>(j)] = hi;
  }
  if (train.y.size() == 0) throw ValidationError("training data has no response");
  tr.y_min = train.y.minCoeff();
  tr.y_max = train.y.maxCoeff();
  if (!(tr.y_max > tr.y_min))
    throw ValidationError("response column '" + train.schema.target + "' is constant");
  return tr;
}

Eigen::MatrixXd NormalizationTransform::apply_x(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(kinds.size()))
    throw ValidationError("covariate matrix has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(kinds.size()));
  Eigen::MatrixXd u = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (kinds[ju] != ColumnKind::kContinuous) continue;
    u.col(j) = (x.col(j).array() - x_min[ju]) / (x_max[ju] - x_min[ju]);
  }
  return u;
}

Eigen::MatrixXd NormalizationTransform::inverse_x(const Eigen::MatrixXd& u) const {
  Eigen::MatrixXd x = u;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (kinds[ju] != ColumnKind::kContinuous) continue;
    x.col(j) = u.col(j).array() * (x_max[ju] - x_min[ju]) + x_min[ju];
  }
  return x;
}

Eigen::VectorXd NormalizationTransform::apply_y(const Eigen::VectorXd& y) const {
  return (y.array() - y_min) / (y_max - y_min) - 0.5;
}

Eigen::VectorXd NormalizationTransform::inverse_y(const Eigen::VectorXd& z) const {
  return (z.array() + 0.5) * (y_max - y_min) + y_min;
}

std::pair<NormalizationTransform, Dataset> fit_transform(const Dataset& train) {
  NormalizationTransform tr = NormalizationTransform::fit(train);
  Dataset out = train;
  out.x = tr.apply_x(train.x);
  out.y = tr.apply_y(train.y);
  // Pin the extremes so the range is exactly [-0.5, 0.5].
  for (Eigen::Index i = 0; i < out.y.size(); ++i) {
    if (train.y(i) == tr.y_min) out.y(i) = -0.5;
    if (train.y(i) == tr.y_max) out.y(i) = 0.5;
  }
  return {std::move(tr), std::move(out)};
}

Design make_design(const Dataset& normalized, const std::vector<std::string>& gp_columns,
                   const std::vector<std::string>& rotation_columns) {
  const Schema& s = normalized.schema;
  Design d;
  d.x = normalized.x;
  d.kinds = s.kinds;
  for (std::size_t j = 0; j < s.names.size(); ++j)
    d.levels.push_back(static_cast<int>(s.levels[j].size()));
  auto resolve = [&](const std::vector<std::string>& names, const char* what) {
    std::vector<int> cols;
    if (names.empty()) {
      for (std::size_t j = 0; j < s.names.size(); ++j)
        if (s.kinds[j] == ColumnKind::kContinuous) cols.push_back(static_cast<int>(j));
      return cols;
    }
    for (const auto& name : names) {
      const int j = s.index_of(name);
      if (j < 0) throw ValidationError(std::string(what) + " column '" + name + "' not found");
      if (s.kinds[static_cast<std::size_t>(j)] != ColumnKind::kContinuous)
        throw ValidationError(std::string(what) + " column '" + name + "' is categorical");
      if (std::find(cols.begin(), cols.end(), j) == cols.end()) cols.push_back(j);
    }
    std::sort(cols.begin(), cols.end());
    return cols;
  };
  d.gp_columns = resolve(gp_columns, "GP");
  d.rotation_columns = resolve(rotation_columns, "rotation");
  return d;
}

// Serialization

namespace {

json rule_to_json(const SplitRule& rule) {
  return std::visit(
      [](const auto& r) -> json {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, AxisRule>)
          return {{"type", "axis"}, {"var", r.var}, {"cut", r.cut}};
        else if constexpr (std::is_same_v<R, CategoricalRule>)
          return {{"type", "categorical"}, {"var", r.var}, {"levels", r.levels}};
        else
          return {{"type", "rotated"}, {"j", r.var_j}, {"h", r.var_h},
                  {"theta", r.theta}, {"cut", r.cut}};
      },
      rule);
}

SplitRule rule_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "axis") return AxisRule{j.at("var").get<int>(), j.at("cut").get<double>()};
  if (type == "categorical")
    return CategoricalRule{j.at("var").get<int>(), j.at("levels").get<std::vector<int>>()};
  if (type == "rotated")
    return RotatedRule{j.at("j").get<int>(), j.at("h").get<int>(), j.at("theta").get<double>(),
                       j.at("cut").get<double>()};
  throw ValidationError("unknown rule type '" + type + "'");
}

json vec_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json stats_to_json(const MoveStats& s) {
  return {{"proposed", s.proposed}, {"accepted", s.accepted},
          {"numeric_rejections", s.numeric_rejections}};
}

MoveStats stats_from_json(const json& j) {
  MoveStats s;
  s.proposed = j.at("proposed").get<std::array<long, kMoveKinds>>();
  s.accepted = j.at("accepted").get<std::array<long, kMoveKinds>>();
  s.numeric_rejections = j.at("numeric_rejections").get<long>();
  return s;
}

json hp_to_json(const Hyperparams& hp) {
  const auto& m = hp.moves;
  return {{"trees", hp.trees},
          {"k", hp.k},
          {"alpha", hp.alpha},
          {"beta", hp.beta},
          {"nu", hp.nu},
          {"tau_mu", hp.tau_mu},
          {"mu_mu", hp.mu_mu},
          {"kappa", hp.kappa},
          {"a_phi1", hp.a_phi1},
          {"d_phi1", hp.d_phi1},
          {"a_phi2", hp.a_phi2},
          {"d_phi2", hp.d_phi2},
          {"a_tau", hp.a_tau},
          {"d_tau", hp.d_tau},
          {"eta_tau", hp.eta_tau},
          {"moves", {m.grow, m.grow_project, m.change, m.change_project, m.prune}},
          {"theta_grid", hp.theta_grid},
          {"phi_grid", hp.phi_grid},
          {"n_mcmc", hp.n_mcmc},
          {"n_burnin", hp.n_burnin},
          {"q", hp.q},
          {"min_leaf_size", hp.min_leaf_size},
          {"nugget", hp.nugget}};
}

Hyperparams hp_from_json(const json& j) {
  Hyperparams hp;
  hp.trees = j.at("trees");
  hp.k = j.at("k");
  hp.alpha = j.at("alpha");
  hp.beta = j.at("beta");
  hp.nu = j.at("nu");
  hp.tau_mu = j.at("tau_mu");
  hp.mu_mu = j.at("mu_mu");
  hp.kappa = j.at("kappa");
  hp.a_phi1 = j.at("a_phi1");
  hp.d_phi1 = j.at("d_phi1");
  hp.a_phi2 = j.at("a_phi2");
  hp.d_phi2 = j.at("d_phi2");
  hp.a_tau = j.at("a_tau");
  hp.d_tau = j.at("d_tau");
  hp.eta_tau = j.at("eta_tau");
  const auto m = j.at("moves").get<std::array<double, 5>>();
  hp.moves = {m[0], m[1], m[2], m[3], m[4]};
  hp.theta_grid = j.at("theta_grid").get<std::vector<double>>();
  hp.phi_grid = j.at("phi_grid").get<std::vector<double>>();
  hp.n_mcmc = j.at("n_mcmc");
  hp.n_burnin = j.at("n_burnin");
  hp.q = j.at("q");
  hp.min_leaf_size = j.at("min_leaf_size");
  hp.nugget = j.at("nugget");
  return hp;
}

json kinds_to_json(const std::vector<ColumnKind>& kinds) {
  json out = json::array();
  for (auto k : kinds) out.push_back(k == ColumnKind::kContinuous ? "continuous" : "categorical");
  return out;
}

std::vector<ColumnKind> kinds_from_json(const json& j) {
  std::vector<ColumnKind> out;
  for (const auto& s : j) {
    const auto v = s.get<std::string>();
    if (v == "continuous") out.push_back(ColumnKind::kContinuous);
    else if (v == "categorical") out.push_back(ColumnKind::kCategorical);
    else throw ValidationError("unknown column kind '" + v + "'");
  }
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& x) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i) rows.push_back(vec_to_json(x.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd r = vec_from_json(j[i]);
    if (r.size() != cols) throw ValidationError("training matrix row has wrong width");
    x.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return x;
}

json header_json(const FittedModel& m) {
  const PosteriorDraws& p = m.posterior;
  const Design& d = p.design;
  const NormalizationTransform& tr = m.transform;
  return {
      {"format", "gpbart-posterior"},
      {"version", kFormatVersion},
      {"seed", p.seed},
      {"config_hash", m.config_hash},
      {"variant", std::string(1, variant_letter(p.variant))},
      {"draws", p.draws.size()},
      {"hyperparams", hp_to_json(p.hp)},
      {"transform",
       {{"x_min", tr.x_min}, {"x_max", tr.x_max}, {"kinds", kinds_to_json(tr.kinds)},
        {"y_min", tr.y_min}, {"y_max", tr.y_max}}},
      {"schema",
       {{"target", m.schema.target}, {"names", m.schema.names},
        {"kinds", kinds_to_json(m.schema.kinds)}, {"levels", m.schema.levels}}},
      {"design",
       {{"kinds", kinds_to_json(d.kinds)}, {"levels", d.levels}, {"gp_columns", d.gp_columns},
        {"rotation_columns", d.rotation_columns}, {"cols", d.x.cols()},
        {"x", matrix_to_json(d.x)}}},
      {"stats",
       {{"retained", stats_to_json(p.retained_stats)}, {"all", stats_to_json(p.all_stats)},
        {"phi_proposed", p.phi_proposed}, {"phi_accepted", p.phi_accepted}}},
      {"tau_trace", p.tau_trace}};
}

json draw_json(const Draw& d, std::size_t k) {
  json trees = json::array();
  for (const auto& td : d.trees) {
    json nodes = json::array();
    json values = json::array();
    for (std::size_t id = 0; id < td.tree.size(); ++id) {
      const Node& nd = td.tree.node(static_cast<NodeId>(id));
      nodes.push_back({{"parent", nd.parent},
                       {"left", nd.left},
                       {"right", nd.right},
                       {"depth", nd.depth},
                       {"rule", nd.rule ? rule_to_json(*nd.rule) : json(nullptr)}});
      values.push_back(id < td.leaf_values.size() ? vec_to_json(td.leaf_values[id]) : json::array());
    }
    trees.push_back({{"phi", vec_to_json(td.phi)}, {"nodes", nodes}, {"values", values}});
  }
  return {{"draw", k}, {"tau", d.tau}, {"fit", vec_to_json(d.fit)}, {"trees", trees}};
}

Draw draw_from_json(const json& j) {
  Draw d;
  d.tau = j.at("tau").get<double>();
  d.fit = vec_from_json(j.at("fit"));
  for (const auto& tj : j.at("trees")) {
    std::vector<Node> nodes;
    for (const auto& nj : tj.at("nodes")) {
      Node nd;
      nd.parent = nj.at("parent");
      nd.left = nj.at("left");
      nd.right = nj.at("right");
      nd.depth = nj.at("depth");
      if (!nj.at("rule").is_null()) nd.rule = rule_from_json(nj.at("rule"));
      nodes.push_back(std::move(nd));
    }
    TreeDraw td;
    td.tree = DecisionTree::from_nodes(std::move(nodes));
    td.phi = vec_from_json(tj.at("phi"));
    for (const auto& v : tj.at("values")) td.leaf_values.push_back(vec_from_json(v));
    if (td.leaf_values.size() != td.tree.size())
      throw ValidationError("leaf value list does not match node count");
    d.trees.push_back(std::move(td));
  }
  return d;
}

}  // namespace

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return mix64(h);
}

std::uint64_t config_hash(const Hyperparams& hp, Variant variant, std::uint64_t seed) {
  return hash_string(hp_to_json(hp).dump() + variant_letter(variant) + std::to_string(seed));
}

void save_draws(const FittedModel& model, std::ostream& os) {
  os << header_json(model).dump() << '\n';
  for (std::size_t k = 0; k < model.posterior.draws.size(); ++k)
    os << draw_json(model.posterior.draws[k], k).dump() << '\n';
  os << json{{"end", true}, {"draws", model.posterior.draws.size()}}.dump() << '\n';
  if (!os) throw ValidationError("failed writing posterior stream");
}

void save_draws(const FittedModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open '" + path + "' for writing");
  save_draws(model, os);
}

FittedModel load_draws(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw ValidationError("empty posterior stream");
  FittedModel m;
  std::size_t declared = 0;
  try {
    const json h = json::parse(line);
    if (h.value("format", "") != "gpbart-posterior")
      throw ValidationError("not a posterior stream");
    const int version = h.at("version");
    if (version != kFormatVersion)
      throw ValidationError("unsupported posterior format version " + std::to_string(version) +
                            " (expected " + std::to_string(kFormatVersion) + ")");
    PosteriorDraws& p = m.posterior;
    p.seed = h.at("seed");
    m.config_hash = h.at("config_hash");
    p.variant = parse_variant(h.at("variant").get<std::string>());
    declared = h.at("draws");
    p.hp = hp_from_json(h.at("hyperparams"));
    const json& t = h.at("transform");
    m.transform.x_min = t.at("x_min").get<std::vector<double>>();
    m.transform.x_max = t.at("x_max").get<std::vector<double>>();
    m.transform.kinds = kinds_from_json(t.at("kinds"));
    m.transform.y_min = t.at("y_min");
    m.transform.y_max = t.at("y_max");
    const json& s = h.at("schema");
    m.schema.target = s.at("target");
    m.schema.names = s.at("names").get<std::vector<std::string>>();
    m.schema.kinds = kinds_from_json(s.at("kinds"));
    m.schema.levels = s.at("levels").get<std::vector<std::vector<std::string>>>();
    const json& d = h.at("design");
    p.design.kinds = kinds_from_json(d.at("kinds"));
    p.design.levels = d.at("levels").get<std::vector<int>>();
    p.design.gp_columns = d.at("gp_columns").get<std::vector<int>>();
    p.design.rotation_columns = d.at("rotation_columns").get<std::vector<int>>();
    p.design.x = matrix_from_json(d.at("x"), d.at("cols").get<Eigen::Index>());
    const json& st = h.at("stats");
    p.retained_stats = stats_from_json(st.at("retained"));
    p.all_stats = stats_from_json(st.at("all"));
    p.phi_proposed = st.at("phi_proposed");
    p.phi_accepted = st.at("phi_accepted");
    p.tau_trace = h.at("tau_trace").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed posterior header: ") + e.what());
  }

  bool trailer = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (trailer) throw ValidationError("data after the end-of-stream record");
    const std::size_t k = m.posterior.draws.size();
    try {
      const json j = json::parse(line);
      if (j.contains("end")) {
        if (j.at("draws").get<std::size_t>() != k)
          throw ValidationError("end record count does not match draw records");
        trailer = true;
        continue;
      }
      if (j.at("draw").get<std::size_t>() != k) throw ValidationError("out-of-order draw index");
      m.posterior.draws.push_back(draw_from_json(j));
    } catch (const std::exception& e) {
      throw ValidationError("draw record " + std::to_string(k) + ": " + e.what());
    }
  }
  if (m.posterior.draws.size() != declared)
    throw ValidationError("truncated posterior stream: header declares " + std::to_string(declared) +
                          " draws, found " + std::to_string(m.posterior.draws.size()));
  if (declared > 0 && !trailer) throw ValidationError("truncated posterior stream: missing end record");
  return m;
}

FittedModel load_draws(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open posterior file '" + path + "'");
  return load_draws(is);
}

}  // namespace gpbart
