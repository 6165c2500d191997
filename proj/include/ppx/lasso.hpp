#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppx/error.hpp"

namespace ppx {

/// Solver and lambda-selection settings.
///
/// When `lambda_grid` is empty the grid is built per training set: `n_lambda`
/// log-spaced values from lambda_max down to lambda_max * `lambda_min_ratio`.
struct LassoFitConfig {
  std::vector<double> lambda_grid;
  std::size_t n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  std::size_t cv_folds = 10;
  std::size_t max_iter = 100000;  // coordinate sweeps
  double tol = 1e-7;              // max absolute coefficient change per full sweep

  void validate() const;
};

/// Fitted L1-regularized linear predictor.
///
/// Coefficients live in standardized space (column mean 0, population sd 1);
/// columns with zero variance are not retained and contribute nothing to
/// predictions.
struct LassoModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd column_means;
  Eigen::VectorXd column_sds;
  std::vector<bool> retained;
  double y_mean = 0.0;

  std::size_t sweeps = 0;
  double final_delta = 0.0;
  double kkt_residual = 0.0;  // max violation of the optimality conditions at exit
  std::vector<std::string> warnings;

  std::size_t nonzero() const;
};

class NonConvergence : public Error {
 public:
  NonConvergence(std::size_t sweeps, double final_delta);
  double final_delta() const noexcept { return final_delta_; }

 private:
  double final_delta_;
};

/// Observer for the penalized objective after every coordinate sweep.
using SweepObserver = std::function<void(double objective)>;

/// Minimizes (1/2n)||y - b0 - Z b||^2 + lambda ||b||_1 over the standardized
/// columns Z of X by cyclic coordinate descent with soft-thresholding.
/// Throws NonConvergence when max_iter sweeps do not reach tol.
LassoModel lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const LassoFitConfig& config,
                     const SweepObserver& observer = {});

/// Fits along a strictly descending grid with warm starts.
std::vector<LassoModel> lasso_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<double>& grid, const LassoFitConfig& config);

/// max_j |z_j' (y - mean y)| / n over the standardized retained columns.
double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// The grid `config` implies for training data (X, y).
std::vector<double> lambda_grid_for(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFitConfig& config);

struct CvPoint {
  double lambda = 0.0;
  double cv_mse = 0.0;     // mean validation MSE over folds
  double train_mse = 0.0;  // full-training fit at this lambda
};

struct CvSelection {
  double lambda_best = 0.0;
  std::size_t best_index = 0;
  std::vector<CvPoint> curve;
  LassoModel model;  // full-training fit at lambda_best
  double max_kkt_residual = 0.0;  // worst over every fold and full-data fit
};

/// Contiguous (unshuffled) k-fold selection of lambda. Ties in mean validation
/// MSE go to the larger lambda. `seed` is accepted for interface stability;
/// contiguous folds consume no randomness.
CvSelection lasso_cv_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFitConfig& config,
                            std::uint64_t seed);

/// y_mean + standardized(X_new) * coefficients.
Eigen::VectorXd lasso_predict(const LassoModel& model, const Eigen::MatrixXd& X_new);

/// Penalized objective of `model` on (X, y), evaluated in standardized space.
double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

double soft_threshold(double z, double gamma) noexcept;

}  // namespace ppx
