#include "gpbart/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "gpbart/errors.hpp"
#include "gpbart/gp.hpp"

namespace gpbart {

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of the
// lowest failing index is rethrown so failures are reported deterministically.
template <typename Fn>
void parallel_for(int n, int workers, Fn fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_at = n;
  std::exception_ptr failure;
  auto body = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = x(rows[i], cols[j]);
  return out;
}

}  // namespace

Hyperparams make_hyperparams(const Eigen::VectorXd& y_model, const Design& design,
                             const FitSettings& s, std::ostream* warn) {
  Hyperparams hp = calibrate(y_model, design, s.trees, s.k, s.eta_tau, warn);
  hp.kappa = s.kappa;
  hp.alpha = s.alpha;
  hp.beta = s.beta;
  hp.n_mcmc = s.n_mcmc;
  hp.n_burnin = s.n_burnin;
  hp.q = s.q;
  hp.min_leaf_size = s.min_leaf_size;
  return hp;
}

FittedModel fit_model(const Dataset& train, const FitSettings& settings, Variant variant,
                      std::uint64_t seed, const RunOptions& options) {
  auto [transform, normalized] = fit_transform(train);
  const Design design = make_design(normalized, settings.gp_columns, settings.rotation_columns);
  const Hyperparams hp = make_hyperparams(normalized.y, design, settings, options.log);
  FittedModel model;
  model.posterior = run(design, normalized.y, hp, variant, seed, options);
  model.transform = std::move(transform);
  model.schema = train.schema;
  model.config_hash = config_hash(hp, variant, seed);
  return model;
}

Eigen::MatrixXd predict_draw_means(const PosteriorDraws& posterior, const Eigen::MatrixXd& x_star,
                                   std::vector<char>* unknown_level, int workers) {
  const Design& design = posterior.design;
  if (posterior.draws.empty()) throw ValidationError("no retained draws");
  if (x_star.cols() != design.cols())
    throw ValidationError("prediction covariates have " + std::to_string(x_star.cols()) +
                          " columns, expected " + std::to_string(design.cols()));
  const Eigen::Index n_star = x_star.rows();
  const int m_draws = static_cast<int>(posterior.draws.size());
  const bool gp = uses_gp(posterior.variant);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_star, m_draws);
  std::vector<char> unknown(static_cast<std::size_t>(n_star), 0);
  std::mutex unknown_mu;

  parallel_for(m_draws, workers, [&](int m) {
    const Draw& draw = posterior.draws[static_cast<std::size_t>(m)];
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_star);
    std::vector<char> local_unknown(static_cast<std::size_t>(n_star), 0);
    for (const TreeDraw& td : draw.trees) {
      DecisionTree tree = td.tree;
      tree.assign_rows(design.x);
      std::map<NodeId, std::vector<int>> test_rows;
      for (Eigen::Index i = 0; i < n_star; ++i) {
        const RouteResult r = route(tree, x_star, i);
        if (r.unknown_level) local_unknown[static_cast<std::size_t>(i)] = 1;
        test_rows[r.leaf].push_back(static_cast<int>(i));
      }
      for (const auto& [leaf, rows] : test_rows) {
        const Eigen::VectorXd& psi = td.leaf_values[static_cast<std::size_t>(leaf)];
        if (psi.size() == 0) throw std::logic_error("test row reached a leaf without training rows");
        if (gp) {
          const Eigen::MatrixXd xn = design.gp_inputs(tree.node(leaf).rows);
          const Eigen::MatrixXd xs = gather(x_star, rows, design.gp_columns);
          const Eigen::VectorXd mu = gp_predict_mean(psi, xn, xs, posterior.hp.kernel(td.phi));
          for (std::size_t i = 0; i < rows.size(); ++i) sum(rows[i]) += mu(static_cast<Eigen::Index>(i));
        } else {
          for (int i : rows) sum(i) += psi(0);
        }
      }
    }
    out.col(m) = sum;
    std::lock_guard lock(unknown_mu);
    for (std::size_t i = 0; i < unknown.size(); ++i) unknown[i] |= local_unknown[i];
  });
  if (unknown_level) *unknown_level = std::move(unknown);
  return out;
}

PredictionSet predict(const FittedModel& model, const Eigen::MatrixXd& x_star, int q,
                      std::uint64_t seed, int workers) {
  if (q < 0) throw ValidationError("Q must be >= 0");
  const PosteriorDraws& post = model.posterior;
  const NormalizationTransform& tr = model.transform;
  PredictionSet out;
  const Eigen::MatrixXd model_means =
      predict_draw_means(post, tr.apply_x(x_star), &out.unknown_level, workers);
  const Eigen::Index n_star = model_means.rows();
  const auto m_draws = model_means.cols();
  out.draw_means.resize(n_star, m_draws);
  for (Eigen::Index m = 0; m < m_draws; ++m) out.draw_means.col(m) = tr.inverse_y(model_means.col(m));
  out.mean = out.draw_means.rowwise().mean();
  if (q == 0) return out;

  out.replicates.resize(n_star, m_draws * q);
  const double scale = tr.y_scale();
  parallel_for(static_cast<int>(m_draws), workers, [&](int m) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(m)}));
    const double sd = scale / std::sqrt(post.draws[static_cast<std::size_t>(m)].tau);
    for (int r = 0; r < q; ++r)
      for (Eigen::Index i = 0; i < n_star; ++i)
        out.replicates(i, static_cast<Eigen::Index>(m) * q + r) =
            out.draw_means(i, m) + sd * standard_normal(rng);
  });
  return out;
}

double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw ValidationError("quantile probability outside [0,1]");
  std::sort(v.begin(), v.end());
  const double h = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

Interval prediction_interval(const PredictionSet& pred, double level) {
  if (!(level >= 0.0 && level < 1.0)) throw ValidationError("interval level must lie in [0,1)");
  const Eigen::MatrixXd& reps = pred.replicates.size() ? pred.replicates : pred.draw_means;
  Interval out;
  out.lower.resize(reps.rows());
  out.upper.resize(reps.rows());
  for (Eigen::Index i = 0; i < reps.rows(); ++i) {
    std::vector<double> row(reps.cols());
    for (Eigen::Index j = 0; j < reps.cols(); ++j) row[static_cast<std::size_t>(j)] = reps(i, j);
    out.lower(i) = quantile(row, 0.5 * (1.0 - level));
    out.upper(i) = quantile(std::move(row), 0.5 * (1.0 + level));
  }
  return out;
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  if (y.size() != y_hat.size()) throw ValidationError("rmse: length mismatch");
  if (y.size() == 0) throw ValidationError("rmse: empty input");
  return std::sqrt((y - y_hat).squaredNorm() / static_cast<double>(y.size()));
}

double crps(const std::vector<double>& samples, double y) {
  const std::size_t k = samples.size();
  if (k < 2) throw ValidationError("crps needs at least two replicates");
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  double abs_dev = 0.0;
  double pair_sum = 0.0;  // sum over i<j of s_j - s_i
  for (std::size_t i = 0; i < k; ++i) {
    abs_dev += std::abs(s[i] - y);
    pair_sum += (2.0 * static_cast<double>(i) - static_cast<double>(k) + 1.0) * s[i];
  }
  const double kd = static_cast<double>(k);
  return abs_dev / kd - pair_sum / (kd * kd);
}

double crps(const Eigen::Ref<const Eigen::VectorXd>& samples, double y) {
  return crps(std::vector<double>(samples.data(), samples.data() + samples.size()), y);
}

double dataset_crps(const Eigen::MatrixXd& replicates, const Eigen::VectorXd& y) {
  if (replicates.rows() != y.size()) throw ValidationError("crps: length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Eigen::VectorXd row = replicates.row(i).transpose();
    total += crps(row, y(i));
  }
  return total / static_cast<double>(y.size());
}

double coverage(const Interval& interval, const Eigen::VectorXd& values) {
  if (interval.lower.size() != values.size()) throw ValidationError("coverage: length mismatch");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    hits += values(i) >= interval.lower(i) && values(i) <= interval.upper(i);
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

Eigen::MatrixXd min_phi_by_draw(const PosteriorDraws& posterior) {
  const auto p = static_cast<Eigen::Index>(posterior.design.gp_columns.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(posterior.draws.size()), p);
  for (std::size_t m = 0; m < posterior.draws.size(); ++m) {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
    for (const auto& td : posterior.draws[m].trees) lo = lo.cwiseMin(td.phi);
    out.row(static_cast<Eigen::Index>(m)) = lo.transpose();
  }
  return out;
}

int default_workers() {
  if (const char* env = std::getenv("GPBART_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<int> assign_folds(int n, int folds, Rng& rng) {
  if (folds < 2) throw ValidationError("need at least 2 folds");
  if (n < folds) throw ValidationError("fewer rows than folds");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own index draws so the order is portable.
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[uniform_index(rng, i + 1)]);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < idx.size(); ++i) fold[static_cast<std::size_t>(idx[i])] = static_cast<int>(i % folds);
  return fold;
}

namespace {

Dataset subset(const Dataset& d, const std::vector<int>& rows) {
  Dataset out;
  out.schema = d.schema;
  out.x = d.x(rows, Eigen::all);
  out.y = d.y(rows);
  return out;
}

// Ranks 1..V by ascending value; ties keep variant order.
std::vector<int> rank_of(const std::vector<double>& values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)]; });
  std::vector<int> rank(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  return rank;
}

}  // namespace

CvReport cross_validate(const Dataset& data, const CvConfig& cfg) {
  if (cfg.variants.empty()) throw ValidationError("no variants requested");
  if (cfg.repetitions < 1) throw ValidationError("need at least one repetition");
  const int n = static_cast<int>(data.rows());
  if (n < cfg.folds) throw ValidationError("fewer rows than folds");
  if (n / cfg.folds < 1) throw ValidationError("a fold would be empty");
  const int folds_run = cfg.max_folds > 0 ? std::min(cfg.max_folds, cfg.folds) : cfg.folds;
  const int n_var = static_cast<int>(cfg.variants.size());

  std::vector<std::vector<int>> fold_of(static_cast<std::size_t>(cfg.repetitions));
  for (int r = 0; r < cfg.repetitions; ++r) {
    Rng rng(derive_seed(cfg.seed, {0xF01D, static_cast<std::uint64_t>(r)}));
    fold_of[static_cast<std::size_t>(r)] = assign_folds(n, cfg.folds, rng);
  }

  CvReport report;
  report.variants = cfg.variants;
  const int n_jobs = cfg.repetitions * folds_run * n_var;
  report.records.resize(static_cast<std::size_t>(n_jobs));
  // Inner prediction stays single-threaded; parallelism is over jobs.
  parallel_for(n_jobs, cfg.workers, [&](int job) {
    const int r = job / (folds_run * n_var);
    const int f = (job / n_var) % folds_run;
    const int v = job % n_var;
    const auto& labels = fold_of[static_cast<std::size_t>(r)];
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i) (labels[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    const Dataset train = subset(data, train_rows);
    const Dataset test = subset(data, test_rows);
    const Variant variant = cfg.variants[static_cast<std::size_t>(v)];
    const auto path = {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(f),
                       static_cast<std::uint64_t>(variant)};
    std::ostringstream quiet;
    RunOptions opts;
    opts.log = &quiet;
    const FittedModel model =
        fit_model(train, cfg.settings, variant, derive_seed(cfg.seed, path), opts);
    const PredictionSet pred =
        predict(model, test.x, std::max(cfg.settings.q, 1), derive_seed(cfg.seed ^ 0x9E37, path), 1);

    CvRecord& rec = report.records[static_cast<std::size_t>(job)];
    rec.repetition = r;
    rec.fold = f;
    rec.variant = variant;
    rec.n_train = static_cast<int>(train_rows.size());
    rec.n_test = static_cast<int>(test_rows.size());
    rec.rmse = rmse(test.y, pred.mean);
    rec.crps = dataset_crps(pred.replicates, test.y);
    rec.coverage = coverage(prediction_interval(pred, cfg.interval_level), test.y);
    rec.stats = model.posterior.retained_stats;
    if (cfg.keep_phi_min && uses_gp(variant)) rec.min_phi = min_phi_by_draw(model.posterior);
  });

  for (int part = 0; part < cfg.repetitions * folds_run; ++part) {
    std::vector<double> r_vals, c_vals;
    for (int v = 0; v < n_var; ++v) {
      const auto& rec = report.records[static_cast<std::size_t>(part * n_var + v)];
      r_vals.push_back(rec.rmse);
      c_vals.push_back(rec.crps);
    }
    const auto rr = rank_of(r_vals);
    const auto rc = rank_of(c_vals);
    for (int v = 0; v < n_var; ++v) {
      auto& rec = report.records[static_cast<std::size_t>(part * n_var + v)];
      rec.rank_rmse = rr[static_cast<std::size_t>(v)];
      rec.rank_crps = rc[static_cast<std::size_t>(v)];
    }
  }
  return report;
}

std::vector<CvSummary> CvReport::summary() const {
  std::vector<CvSummary> out;
  for (Variant v : variants) {
    std::vector<double> r, c;
    double rank_r = 0.0, rank_c = 0.0;
    for (const auto& rec : records) {
      if (rec.variant != v) continue;
      r.push_back(rec.rmse);
      c.push_back(rec.crps);
      rank_r += rec.rank_rmse;
      rank_c += rec.rank_crps;
    }
    const double cnt = static_cast<double>(r.size());
    out.push_back({v, median(r), median(c), rank_r / cnt, rank_c / cnt});
  }
  return out;
}

void CvReport::write_long_csv(std::ostream& os) const {
  os << "repetition,fold,variant,metric,value\n" << std::setprecision(17);
  for (const auto& rec : records) {
    const char v = variant_letter(rec.variant);
    const std::pair<const char*, double> metrics[] = {
        {"rmse", rec.rmse}, {"crps", rec.crps}, {"coverage", rec.coverage},
        {"rank_rmse", static_cast<double>(rec.rank_rmse)},
        {"rank_crps", static_cast<double>(rec.rank_crps)}};
    for (const auto& [name, value] : metrics)
      os << rec.repetition << ',' << rec.fold << ',' << v << ',' << name << ',' << value << '\n';
  }
}

void CvReport::write_summary_csv(std::ostream& os) const {
  os << "variant,median_rmse,median_crps,mean_rank_rmse,mean_rank_crps\n" << std::setprecision(10);
  for (const auto& s : summary())
    os << variant_letter(s.variant) << ',' << s.median_rmse << ',' << s.median_crps << ','
       << s.mean_rank_rmse << ',' << s.mean_rank_crps << '\n';
}

}  // namespace gpbart
