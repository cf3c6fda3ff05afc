#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpbart/io.hpp"
#include "gpbart/sampler.hpp"

namespace gpbart {

// User-facing model knobs; everything else comes from calibration.
struct FitSettings {
  int trees = 10;
  double k = 2.0;
  double kappa = 0.3;
  double eta_tau = 0.9;
  double alpha = 0.95;
  double beta = 2.0;
  int n_mcmc = 2000;
  int n_burnin = 500;
  int q = 10;
  int min_leaf_size = 1;
  std::vector<std::string> gp_columns;        // empty: all continuous
  std::vector<std::string> rotation_columns;  // empty: all continuous
};

// Calibrated hyperparameters with the settings applied.
Hyperparams make_hyperparams(const Eigen::VectorXd& y_model, const Design& design,
                             const FitSettings& settings, std::ostream* warn = nullptr);

// Normalize, calibrate and sample on a raw (original-scale) training set.
FittedModel fit_model(const Dataset& train, const FitSettings& settings, Variant variant,
                      std::uint64_t seed, const RunOptions& options = {});

struct PredictionSet {
  Eigen::MatrixXd draw_means;  // rows x M, original scale
  Eigen::VectorXd mean;        // average over draws
  Eigen::MatrixXd replicates;  // rows x (M*Q), original scale; empty when Q = 0
  std::vector<char> unknown_level;  // per row: some tree routed an unseen level
};

// Per-draw model-scale means for already normalized covariates.
Eigen::MatrixXd predict_draw_means(const PosteriorDraws& posterior, const Eigen::MatrixXd& x_star,
                                   std::vector<char>* unknown_level = nullptr, int workers = 1);

// Predictions for original-scale covariates (categorical columns as codes).
// Each retained draw contributes its mean plus Q replicates with
// N(0, 1/tau_m) noise; deterministic given the seed regardless of workers.
PredictionSet predict(const FittedModel& model, const Eigen::MatrixXd& x_star, int q,
                      std::uint64_t seed, int workers = 1);

// Type-7 empirical quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double prob);

struct Interval {
  Eigen::VectorXd lower, upper;
};

// Central interval at `level` from pooled replicates; level 0 gives the
// median at both ends.
Interval prediction_interval(const PredictionSet& pred, double level);

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);

// mean|X_i - y| - (1/2K^2) sum_ij |X_i - X_j|, i.e. the CRPS of the
// empirical distribution of the replicates.
double crps(const std::vector<double>& samples, double y);
double crps(const Eigen::Ref<const Eigen::VectorXd>& samples, double y);

// Mean CRPS over rows, with each row's replicates in a row of `replicates`.
double dataset_crps(const Eigen::MatrixXd& replicates, const Eigen::VectorXd& y);

// Fraction of rows whose value lies in [lower, upper].
double coverage(const Interval& interval, const Eigen::VectorXd& values);

// Per retained draw (rows) and GP column (cols): the minimum phi over trees.
Eigen::MatrixXd min_phi_by_draw(const PosteriorDraws& posterior);

// Worker count from GPBART_WORKERS, else the hardware concurrency.
int default_workers();

// Balanced fold labels 0..folds-1 from a shuffled index striping.
std::vector<int> assign_folds(int n, int folds, Rng& rng);

struct CvConfig {
  std::vector<Variant> variants = {Variant::kA, Variant::kB, Variant::kC, Variant::kD};
  int repetitions = 5;
  int folds = 5;
  std::uint64_t seed = 1;
  int workers = 1;
  FitSettings settings;
  // When > 0, only the first max_folds folds of each repetition run.
  int max_folds = 0;
  double interval_level = 0.95;
  bool keep_phi_min = false;
};

struct CvRecord {
  int repetition = 0;
  int fold = 0;
  Variant variant = Variant::kD;
  int n_train = 0;
  int n_test = 0;
  double rmse = 0.0;
  double crps = 0.0;
  double coverage = 0.0;
  int rank_rmse = 0;
  int rank_crps = 0;
  MoveStats stats;  // retained proposals
  Eigen::MatrixXd min_phi;  // when keep_phi_min
};

struct CvSummary {
  Variant variant;
  double median_rmse, median_crps, mean_rank_rmse, mean_rank_crps;
};

struct CvReport {
  std::vector<Variant> variants;
  std::vector<CvRecord> records;  // (repetition, fold, variant) order

  std::vector<CvSummary> summary() const;
  void write_long_csv(std::ostream& os) const;
  void write_summary_csv(std::ostream& os) const;
};

// Repeated k-fold cross-validation. Metrics are on the original y scale;
// every (repetition, fold, variant) job has its own derived seed.
CvReport cross_validate(const Dataset& data, const CvConfig& config);

double median(std::vector<double> values);

}  // namespace gpbart
