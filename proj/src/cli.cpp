#include "gpbart/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "gpbart/errors.hpp"
#include "gpbart/evaluate.hpp"
#include "gpbart/io.hpp"
#include "gpbart/simdata.hpp"

namespace gpbart {

namespace fs = std::filesystem;

std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    auto strip = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty() || key == "config")
      throw ValidationError("config line " + std::to_string(line_no) + ": invalid key");
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct DataOptions {
  std::string data;
  std::string target = "y";
  std::string categorical;
  std::string ignore;
};

struct ModelOptions {
  FitSettings settings;
  std::string gp_columns;
  std::string rotation_columns;
  std::uint64_t seed = 1;
  bool verbose = false;
};

void add_data_options(CLI::App* app, DataOptions& d, bool required) {
  auto* opt = app->add_option("--data", d.data, "input CSV");
  if (required) opt->required();
  app->add_option("--target", d.target, "response column")->capture_default_str();
  app->add_option("--categorical", d.categorical, "comma-separated categorical columns");
  app->add_option("--ignore", d.ignore, "comma-separated columns to drop");
}

void add_model_options(CLI::App* app, ModelOptions& m) {
  auto& s = m.settings;
  app->add_option("--trees", s.trees, "number of trees")->capture_default_str();
  app->add_option("--mcmc", s.n_mcmc, "total MCMC iterations")->capture_default_str();
  app->add_option("--burnin", s.n_burnin, "burn-in iterations")->capture_default_str();
  app->add_option("--k", s.k, "prior interval multiplier")->capture_default_str();
  app->add_option("--kappa", s.kappa, "length-scale mixture weight")->capture_default_str();
  app->add_option("--eta", s.eta_tau, "Pr(tau >= OLS precision)")->capture_default_str();
  app->add_option("--alpha", s.alpha, "tree prior base")->capture_default_str();
  app->add_option("--beta", s.beta, "tree prior power")->capture_default_str();
  app->add_option("--q", s.q, "interval replicates per draw")->capture_default_str();
  app->add_option("--min-leaf", s.min_leaf_size, "minimum leaf size")->capture_default_str();
  app->add_option("--gp-columns", m.gp_columns, "comma-separated kernel columns (default: continuous)");
  app->add_option("--rotation-columns", m.rotation_columns,
                  "comma-separated rotation columns (default: continuous)");
  app->add_option("--seed", m.seed, "random seed")->capture_default_str();
  app->add_flag("--verbose", m.verbose, "progress on stderr");
}

void validate_settings(const FitSettings& s) {
  if (s.trees < 1) throw ValidationError("--trees must be >= 1");
  if (s.n_mcmc < 1) throw ValidationError("--mcmc must be >= 1");
  if (s.n_burnin < 0 || s.n_burnin >= s.n_mcmc) throw ValidationError("need 0 <= --burnin < --mcmc");
  if (!(s.k > 0)) throw ValidationError("--k must be positive");
  if (!(s.kappa > 0 && s.kappa < 1)) throw ValidationError("--kappa must lie in (0,1)");
  if (!(s.eta_tau > 0 && s.eta_tau < 1)) throw ValidationError("--eta must lie in (0,1)");
  if (!(s.alpha > 0 && s.alpha < 1)) throw ValidationError("--alpha must lie in (0,1)");
  if (s.beta < 0) throw ValidationError("--beta must be >= 0");
  if (s.q < 0) throw ValidationError("--q must be >= 0");
  if (s.min_leaf_size < 1) throw ValidationError("--min-leaf must be >= 1");
}

FitSettings resolved_settings(const ModelOptions& m) {
  FitSettings s = m.settings;
  s.gp_columns = split_list(m.gp_columns);
  s.rotation_columns = split_list(m.rotation_columns);
  validate_settings(s);
  return s;
}

Dataset load_training(const DataOptions& d) {
  return load_csv(d.data, d.target, split_list(d.categorical), split_list(d.ignore));
}

// Checks column lists and calibration inputs without sampling.
void dry_validate(const Dataset& train, const FitSettings& s) {
  const auto [tr, normalized] = fit_transform(train);
  const Design design = make_design(normalized, s.gp_columns, s.rotation_columns);
  std::ostringstream quiet;
  make_hyperparams(normalized.y, design, s, &quiet);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ValidationError("cannot write '" + p.string() + "'");
  os << std::setprecision(17);
  return os;
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
}

void report_rejections(const Dataset& d, std::ostream& err) {
  if (d.rejected.empty()) return;
  err << "rejected " << d.rejected.size() << " row(s)\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(d.rejected.size(), 10); ++i)
    err << "  " << d.rejected[i] << '\n';
}

void write_acceptance(std::ostream& os, const MoveStats& s, Variant v) {
  os << "move,proposed,accepted,rate\n";
  for (MoveKind k : kAllMoves) {
    if (is_projection(k) && !uses_projection(v)) continue;
    const int i = static_cast<int>(k);
    os << move_name(k) << ',' << s.proposed[i] << ',' << s.accepted[i] << ',' << s.rate(k) << '\n';
  }
}

// fit

struct FitOptions {
  DataOptions data;
  ModelOptions model;
  std::string variant = "D";
  std::string out = "gpbart_out";
};

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  const Variant variant = parse_variant(o.variant);
  const FitSettings settings = resolved_settings(o.model);
  const Dataset train = load_training(o.data);
  report_rejections(train, err);
  dry_validate(train, settings);

  RunOptions ro;
  ro.verbose = o.model.verbose;
  ro.log = &err;
  const FittedModel model = fit_model(train, settings, variant, o.model.seed, ro);
  const PosteriorDraws& post = model.posterior;

  prepare_dir(o.out);
  const fs::path dir(o.out);
  const std::string tag = "# seed=" + std::to_string(post.seed) + " config_hash=" + hex(model.config_hash) + "\n";
  save_draws(model, (dir / "posterior.jsonl").string());
  {
    auto os = open_out(dir / "tau_trace.csv");
    os << tag << "iteration,tau,sigma\n";
    for (std::size_t m = 0; m < post.tau_trace.size(); ++m)
      os << m << ',' << post.tau_trace[m] << ','
         << model.transform.y_scale() / std::sqrt(post.tau_trace[m]) << '\n';
  }
  {
    auto os = open_out(dir / "acceptance.csv");
    os << tag;
    write_acceptance(os, post.retained_stats, variant);
  }
  std::vector<double> taus;
  std::map<int, long> depth_hist;
  for (const auto& d : post.draws) {
    taus.push_back(d.tau);
    for (const auto& t : d.trees) ++depth_hist[t.tree.max_depth()];
  }
  nlohmann::json summary = {
      {"seed", post.seed},
      {"config_hash", hex(model.config_hash)},
      {"variant", std::string(1, variant_letter(variant))},
      {"n", post.design.rows()},
      {"retained_draws", post.draws.size()},
      {"median_tau", median(taus)},
      {"median_sigma", model.transform.y_scale() / std::sqrt(median(taus))},
      {"phi_acceptance", post.phi_proposed ? static_cast<double>(post.phi_accepted) / static_cast<double>(post.phi_proposed) : 0.0},
      {"numeric_rejections", post.all_stats.numeric_rejections}};
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [depth, count] : depth_hist) hist[std::to_string(depth)] = count;
  summary["tree_depth_histogram"] = hist;
  {
    auto os = open_out(dir / "summary.json");
    os << summary.dump(2) << '\n';
  }
  out << "wrote " << post.draws.size() << " draws to " << (dir / "posterior.jsonl").string() << '\n';
  return kExitOk;
}

// predict

struct PredictOptions {
  std::string posterior;
  std::string data;
  std::string out = "predictions.csv";
  double level = 0.95;
  int q = -1;
  std::uint64_t seed = 1;
  int workers = 0;
};

int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream& err) {
  if (!(o.level >= 0.0 && o.level < 1.0)) throw ValidationError("--level must lie in [0,1)");
  if (!fs::exists(o.posterior)) throw ValidationError("posterior file '" + o.posterior + "' not found");
  const FittedModel model = load_draws(o.posterior);
  const Dataset test = load_csv(o.data, model.schema);
  report_rejections(test, err);
  const int q = o.q >= 0 ? o.q : model.posterior.hp.q;
  const PredictionSet pred = predict(model, test.x, q, o.seed, o.workers > 0 ? o.workers : default_workers());
  const Interval iv = prediction_interval(pred, o.level);
  long unknown = std::count(pred.unknown_level.begin(), pred.unknown_level.end(), 1);
  if (unknown) err << unknown << " row(s) routed with an unseen categorical level\n";

  auto os = open_out(o.out);
  os << "# seed=" << o.seed << " config_hash=" << hex(model.config_hash) << " level=" << o.level << '\n';
  os << "row,mean,lower,upper,unknown_level\n";
  for (Eigen::Index i = 0; i < pred.mean.size(); ++i)
    os << i << ',' << pred.mean(i) << ',' << iv.lower(i) << ',' << iv.upper(i) << ','
       << int(pred.unknown_level[static_cast<std::size_t>(i)]) << '\n';
  out << "wrote " << pred.mean.size() << " predictions to " << o.out << '\n';
  return kExitOk;
}

// simulate

struct SimulateOptions {
  std::string generator = "benchmark";
  int n = 100;
  int p = 5;
  std::uint64_t seed = 1;
  std::string out = "simulated.csv";
};

SimulatedData simulate(const std::string& generator, int n, int p, std::uint64_t seed,
                       nlohmann::json* meta = nullptr) {
  if (generator == "benchmark") {
    BenchmarkConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    if (meta)
      *meta = {{"generator", "benchmark"}, {"n", n}, {"seed", seed}, {"means", cfg.means},
               {"phi", cfg.phi}, {"nu", cfg.nu}, {"tau", cfg.tau}};
    return gen_benchmark(cfg);
  }
  if (generator == "friedman") {
    FriedmanConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.seed = seed;
    if (meta) *meta = {{"generator", "friedman"}, {"n", n}, {"p", p}, {"seed", seed}, {"tau", cfg.tau}};
    return gen_friedman(cfg);
  }
  throw ValidationError("unknown generator '" + generator + "' (expected benchmark or friedman)");
}

Dataset as_dataset(const SimulatedData& sim) {
  Dataset d;
  d.x = sim.x;
  d.y = sim.y;
  d.schema.target = "y";
  for (Eigen::Index j = 0; j < sim.x.cols(); ++j) {
    d.schema.names.push_back("x" + std::to_string(j + 1));
    d.schema.kinds.push_back(ColumnKind::kContinuous);
    d.schema.levels.emplace_back();
  }
  return d;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  nlohmann::json meta;
  const SimulatedData sim = simulate(o.generator, o.n, o.p, o.seed, &meta);
  meta["config_hash"] = hex(hash_string(meta.dump()));
  {
    auto os = open_out(o.out);
    os << "# seed=" << o.seed << " config_hash=" << meta["config_hash"].get<std::string>() << '\n';
    for (Eigen::Index j = 0; j < sim.x.cols(); ++j) os << 'x' << j + 1 << ',';
    os << "y,truth\n";
    for (Eigen::Index i = 0; i < sim.x.rows(); ++i) {
      for (Eigen::Index j = 0; j < sim.x.cols(); ++j) os << sim.x(i, j) << ',';
      os << sim.y(i) << ',' << sim.truth(i) << '\n';
    }
  }
  auto ms = open_out(o.out + ".json");
  ms << meta.dump(2) << '\n';
  out << "wrote " << sim.x.rows() << " rows to " << o.out << '\n';
  return kExitOk;
}

// benchmark

struct BenchmarkOptions {
  DataOptions data;
  ModelOptions model;
  std::string generator;
  int n = 100;
  int p = 5;
  std::string variants = "ABCD";
  int repetitions = 5;
  int folds = 5;
  int max_folds = 0;
  int workers = 0;
  int grid_res = -1;
  double level = 0.95;
  std::string out = "gpbart_benchmark";
};

std::vector<Variant> parse_variants(const std::string& s) {
  std::vector<Variant> out;
  for (char c : s) {
    if (c == ',' || c == ' ') continue;
    const Variant v = parse_variant(std::string(1, c));
    if (std::find(out.begin(), out.end(), v) != out.end())
      throw ValidationError(std::string("variant ") + c + " listed twice");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("no variants given");
  return out;
}

int cmd_benchmark(const BenchmarkOptions& o, std::ostream& out, std::ostream& err) {
  const FitSettings settings = resolved_settings(o.model);
  const std::vector<Variant> variants = parse_variants(o.variants);
  if (o.generator.empty() == o.data.data.empty())
    throw ValidationError("give exactly one of --generator or --data");
  if (o.generator == "benchmark" && o.n != 100 && o.n != 500 && o.n != 1000)
    err << "note: benchmark sizes in the reference protocol are 100, 500 and 1000\n";
  if (o.generator == "friedman" && o.p != 5 && o.p != 10)
    err << "note: Friedman dimensions in the reference protocol are 5 and 10\n";
  if (o.repetitions < 1) throw ValidationError("--repetitions must be >= 1");
  if (o.folds < 2) throw ValidationError("--folds must be >= 2");
  if (!(o.level >= 0.0 && o.level < 1.0)) throw ValidationError("--level must lie in [0,1)");

  const Dataset data = o.generator.empty() ? load_training(o.data)
                                           : as_dataset(simulate(o.generator, o.n, o.p, o.model.seed));
  report_rejections(data, err);
  if (data.rows() < o.folds) throw ValidationError("fewer rows than folds");
  dry_validate(data, settings);

  const bool two_d = data.x.cols() == 2 &&
                     std::all_of(data.schema.kinds.begin(), data.schema.kinds.end(),
                                 [](ColumnKind k) { return k == ColumnKind::kContinuous; });
  const int grid_res = o.grid_res >= 0 ? o.grid_res : (o.generator == "benchmark" ? 50 : 0);
  if (grid_res > 0 && !two_d) throw ValidationError("--grid-res needs exactly two continuous covariates");
  if (grid_res == 1) throw ValidationError("--grid-res must be 0 or >= 2");

  CvConfig cfg;
  cfg.variants = variants;
  cfg.repetitions = o.repetitions;
  cfg.folds = o.folds;
  cfg.max_folds = o.max_folds;
  cfg.seed = o.model.seed;
  cfg.workers = o.workers > 0 ? o.workers : default_workers();
  cfg.settings = settings;
  cfg.interval_level = o.level;
  cfg.keep_phi_min = true;

  nlohmann::json cfg_json = {{"generator", o.generator}, {"data", o.data.data}, {"n", o.n},
                             {"p", o.p}, {"variants", o.variants}, {"repetitions", o.repetitions},
                             {"folds", o.folds}, {"max_folds", o.max_folds}, {"seed", o.model.seed},
                             {"trees", settings.trees}, {"mcmc", settings.n_mcmc},
                             {"burnin", settings.n_burnin}, {"k", settings.k},
                             {"kappa", settings.kappa}, {"eta", settings.eta_tau},
                             {"q", settings.q}, {"grid_res", grid_res}};
  const std::string tag = "# seed=" + std::to_string(o.model.seed) +
                          " config_hash=" + hex(hash_string(cfg_json.dump())) + "\n";

  const CvReport report = cross_validate(data, cfg);

  prepare_dir(o.out);
  const fs::path dir(o.out);
  {
    auto os = open_out(dir / "cv_long.csv");
    os << tag;
    report.write_long_csv(os);
  }
  {
    auto os = open_out(dir / "cv_summary.csv");
    os << tag;
    report.write_summary_csv(os);
  }
  {
    auto os = open_out(dir / "acceptance.csv");
    os << tag << "variant,move,proposed,accepted,rate\n";
    for (Variant v : variants) {
      MoveStats total;
      for (const auto& rec : report.records)
        if (rec.variant == v) total += rec.stats;
      for (MoveKind k : kAllMoves) {
        if (is_projection(k) && !uses_projection(v)) continue;
        const int i = static_cast<int>(k);
        os << variant_letter(v) << ',' << move_name(k) << ',' << total.proposed[i] << ','
           << total.accepted[i] << ',' << total.rate(k) << '\n';
      }
    }
  }
  if (std::any_of(variants.begin(), variants.end(), uses_gp)) {
    auto os = open_out(dir / "phi_min.csv");
    os << tag << "repetition,fold,variant,variable,median,q25,q75,mean\n";
    for (const auto& rec : report.records) {
      if (rec.min_phi.size() == 0) continue;
      for (Eigen::Index j = 0; j < rec.min_phi.cols(); ++j) {
        std::vector<double> col(rec.min_phi.col(j).data(), rec.min_phi.col(j).data() + rec.min_phi.rows());
        os << rec.repetition << ',' << rec.fold << ',' << variant_letter(rec.variant) << ','
           << data.schema.names[static_cast<std::size_t>(j)] << ',' << median(col) << ','
           << quantile(col, 0.25) << ',' << quantile(col, 0.75) << ',' << rec.min_phi.col(j).mean() << '\n';
      }
    }
  }
  if (grid_res > 0) {
    Eigen::Vector2d lo(-1.0, -1.0), hi(1.0, 1.0);
    if (o.generator != "benchmark") {
      lo = data.x.colwise().minCoeff().transpose();
      hi = data.x.colwise().maxCoeff().transpose();
    }
    Eigen::MatrixXd grid(grid_res * grid_res, 2);
    for (int a = 0; a < grid_res; ++a)
      for (int b = 0; b < grid_res; ++b) {
        grid(a * grid_res + b, 0) = lo(0) + (hi(0) - lo(0)) * a / (grid_res - 1);
        grid(a * grid_res + b, 1) = lo(1) + (hi(1) - lo(1)) * b / (grid_res - 1);
      }
    Eigen::MatrixXd surface(grid.rows(), static_cast<Eigen::Index>(variants.size()));
    for (std::size_t v = 0; v < variants.size(); ++v) {
      std::ostringstream quiet;
      RunOptions ro;
      ro.log = &quiet;
      const auto seed = derive_seed(o.model.seed, {0x5E4F, static_cast<std::uint64_t>(variants[v])});
      const FittedModel model = fit_model(data, settings, variants[v], seed, ro);
      surface.col(static_cast<Eigen::Index>(v)) = predict(model, grid, 0, seed, cfg.workers).mean;
    }
    auto os = open_out(dir / "surface.csv");
    os << tag << data.schema.names[0] << ',' << data.schema.names[1];
    for (Variant v : variants) os << ',' << variant_letter(v);
    os << '\n';
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      os << grid(i, 0) << ',' << grid(i, 1);
      for (Eigen::Index v = 0; v < surface.cols(); ++v) os << ',' << surface(i, v);
      os << '\n';
    }
  }
  out << std::setprecision(5);
  for (const auto& s : report.summary())
    out << variant_letter(s.variant) << ": median RMSE " << s.median_rmse << ", median CRPS "
        << s.median_crps << ", mean rank " << s.mean_rank_rmse << '\n';
  return kExitOk;
}

// Moves `--config FILE` contents in front of the subcommand's own flags so
// that explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> head, rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config = a.substr(9);
    } else if (i < 2) {
      head.push_back(a);
    } else {
      rest.push_back(a);
    }
  }
  if (!config.empty()) {
    const auto extra = config_file_args(config);
    head.insert(head.end(), extra.begin(), extra.end());
  }
  head.insert(head.end(), rest.begin(), rest.end());
  return head;
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GP-BART: Bayesian additive regression trees with Gaussian-process leaves"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_unused;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_unused, "key=value file; flags override it");
  };

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "sample the posterior and write it to --out");
  add_data_options(fit_cmd, fit.data, true);
  add_model_options(fit_cmd, fit.model);
  fit_cmd->add_option("--variant", fit.variant, "A, B, C or D")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "output directory")->capture_default_str();
  add_config(fit_cmd);

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "predict from a saved posterior");
  pred_cmd->add_option("--posterior", pred.posterior, "posterior.jsonl from fit")->required();
  pred_cmd->add_option("--data", pred.data, "CSV with the training feature columns")->required();
  pred_cmd->add_option("--out", pred.out, "output CSV")->capture_default_str();
  pred_cmd->add_option("--level", pred.level, "interval level in [0,1)")->capture_default_str();
  pred_cmd->add_option("--q", pred.q, "replicates per draw (default: as fitted)");
  pred_cmd->add_option("--seed", pred.seed, "random seed")->capture_default_str();
  pred_cmd->add_option("--workers", pred.workers, "threads (default: GPBART_WORKERS or all cores)");
  add_config(pred_cmd);

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "write a synthetic dataset");
  sim_cmd->add_option("--generator", sim.generator, "benchmark or friedman")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "rows")->capture_default_str();
  sim_cmd->add_option("--p", sim.p, "Friedman covariates")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "output CSV")->capture_default_str();
  add_config(sim_cmd);

  BenchmarkOptions bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "repeated k-fold comparison of variants");
  add_data_options(bench_cmd, bench.data, false);
  add_model_options(bench_cmd, bench.model);
  bench_cmd->add_option("--generator", bench.generator, "benchmark or friedman (instead of --data)");
  bench_cmd->add_option("--n", bench.n, "generated rows")->capture_default_str();
  bench_cmd->add_option("--p", bench.p, "Friedman covariates")->capture_default_str();
  bench_cmd->add_option("--variants", bench.variants, "subset of ABCD")->capture_default_str();
  bench_cmd->add_option("--repetitions", bench.repetitions, "CV repetitions")->capture_default_str();
  bench_cmd->add_option("--folds", bench.folds, "CV folds")->capture_default_str();
  bench_cmd->add_option("--max-folds", bench.max_folds, "run only the first folds of each repetition");
  bench_cmd->add_option("--workers", bench.workers, "threads (default: GPBART_WORKERS or all cores)");
  bench_cmd->add_option("--grid-res", bench.grid_res, "surface grid resolution (0 disables)");
  bench_cmd->add_option("--level", bench.level, "interval level for coverage")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "output directory")->capture_default_str();
  add_config(bench_cmd);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    args.pop_back();  // program name
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    // help() already describes the selected subcommand, if any.
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit, out, err);
    if (pred_cmd->parsed()) return cmd_predict(pred, out, err);
    if (sim_cmd->parsed()) return cmd_simulate(sim, out);
    return cmd_benchmark(bench, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace gpbart
