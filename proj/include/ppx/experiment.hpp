#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppx/field.hpp"
#include "ppx/lasso.hpp"
#include "ppx/noise.hpp"
#include "ppx/rng.hpp"

namespace ppx {

struct HoldoutBlock {
  int start_year = 0;
  int length = 30;

  int end_year() const noexcept { return start_year + length - 1; }
  bool contains(int year) const noexcept { return year >= start_year && year <= end_year(); }
  friend bool operator==(const HoldoutBlock&, const HoldoutBlock&) = default;
};

/// Outcome of one holdout block. A failed block keeps NaN scores and the
/// solver's error message.
struct BlockRecord {
  HoldoutBlock block;
  double rmse = 0.0;
  double lambda = 0.0;
  double baseline_rmse = 0.0;  // predicting the training-period mean
  double kkt_residual = 0.0;  // worst over every fit made for this block
  double tol = 0.0;
  std::size_t nonzero = 0;
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct CvResult {
  std::string dataset_label;
  std::vector<BlockRecord> blocks;
  std::uint64_t seed = 0;

  std::size_t failed_blocks() const;
};

struct YearWindow {
  int first = 1961;
  int last = 1990;

  friend bool operator==(const YearWindow&, const YearWindow&) = default;
};

struct CpsReconstruction {
  int first_year = 0;
  Eigen::VectorXd values;
  YearWindow calibration_window;
  double correlation_with_target = 0.0;
  std::size_t n_predictors = 0;
  std::vector<std::string> warnings;
};

struct SummaryRow {
  std::string dataset_label;
  std::size_t n_blocks = 0;
  std::size_t n_failed = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

/// Every stride-1 block of `block_length` years inside the span. Needs at
/// least one training year outside each block.
std::vector<HoldoutBlock> enumerate_blocks(int first_year, std::size_t n_years, int block_length);

double rmse(std::span<const double> a, std::span<const double> b);
double pearson(std::span<const double> a, std::span<const double> b);
double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Quantile by linear interpolation between order statistics at position
/// (n - 1) * p. `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

/// Holdout-block cross-validation: for each block, lambda is chosen by
/// contiguous k-fold CV on the remaining years, the model is refit on them and
/// scored on the block. Solver failures are recorded per block.
CvResult run_cv(const std::string& label, const PseudoproxyNetwork& network, const TargetIndex& target,
                std::span<const HoldoutBlock> blocks, const LassoFitConfig& config, std::uint64_t seed,
                Exec exec = Exec::parallel);

/// Same as run_cv with the predictors drawn from a null model. With `draws`
/// > 1 every draw is scored and the per-block RMSE is the mean over draws.
CvResult run_null_cv(const std::string& label, const NullModelSpec& spec, const Eigen::MatrixXd& template_series,
                     const TargetIndex& target, std::span<const HoldoutBlock> blocks, const LassoFitConfig& config,
                     std::uint64_t seed, std::size_t draws = 1, Exec exec = Exec::parallel);

/// Area-weighted composite-plus-scale over the NH series of `network`
/// (coords with lat > 0). Each series is standardized over the calibration
/// window, composited with cos(lat) weights, scaled to the target's
/// calibration sd and shifted to its calibration mean.
CpsReconstruction cps_reconstruct(const PseudoproxyNetwork& network, const TargetIndex& target,
                                  const YearWindow& calibration_window);
CpsReconstruction cps_reconstruct(const PseudoproxyNetwork& network,
                                  std::span<const std::optional<CellCoord>> coords, const TargetIndex& target,
                                  const YearWindow& calibration_window);

/// Five-number summary plus mean of the successful block RMSEs, sorted by label.
std::vector<SummaryRow> summarize(std::span<const CvResult> results);

// CSV emitters. Numbers are written with 10 significant digits.
void write_cv_results(const std::filesystem::path& path, std::span<const CvResult> results);
void write_cv_baseline(const std::filesystem::path& path, std::span<const CvResult> results);
void write_cv_summary(const std::filesystem::path& path, std::span<const SummaryRow> rows);

struct LabeledCps {
  std::string dataset_label;
  CpsReconstruction cps;
};
void write_cps(const std::filesystem::path& path, const TargetIndex& target, std::span<const LabeledCps> recs);
void write_cps_skill(const std::filesystem::path& path, std::span<const LabeledCps> recs);

}  // namespace ppx
