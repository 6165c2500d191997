#include "ppx/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace ppx {

namespace {

/// Training data in standardized space; dropped columns are all-zero in `z`.
struct Standardized {
  Eigen::MatrixXd z;
  Eigen::VectorXd y_centered;
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  std::vector<bool> retained;
  std::vector<Eigen::Index> retained_index;
  double y_mean = 0.0;
  std::vector<std::string> warnings;
};

Standardized standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 2) throw InvalidInput("lasso needs at least 2 observations");
  if (y.size() != n) throw InvalidInput(fmt::format("X has {} rows but y has {} entries", n, y.size()));
  if (!X.allFinite() || !y.allFinite()) throw InvalidInput("lasso input contains non-finite values");

  Standardized s;
  s.means = X.colwise().mean().transpose();
  s.sds.resize(p);
  s.z.resize(n, p);
  s.retained.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto centered = (X.col(j).array() - s.means[j]).matrix();
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n));
    s.sds[j] = sd;
    if (sd > 1e-10 * (1.0 + std::abs(s.means[j]))) {
      s.z.col(j) = centered / sd;
      s.retained[static_cast<std::size_t>(j)] = true;
      s.retained_index.push_back(j);
    } else {
      s.z.col(j).setZero();
      s.warnings.push_back(fmt::format("column {} has zero variance; dropped", j));
    }
  }
  s.y_mean = y.mean();
  s.y_centered = (y.array() - s.y_mean).matrix();
  return s;
}

/// Cyclic coordinate descent over a fixed standardized design, warm-started
/// from the current coefficients.
///
/// After each full sweep the nonzero coordinates are cycled on their own until
/// they settle, with Anderson extrapolation every kAndersonDepth sweeps; an
/// extrapolated point is kept only when it lowers the penalized objective.
/// Convergence is always decided by a full sweep.
class CoordinateDescent {
 public:
  static constexpr std::size_t kAndersonDepth = 5;

  CoordinateDescent(const Standardized& data, const LassoFitConfig& config)
      : data_(data),
        config_(config),
        inv_n_(1.0 / static_cast<double>(data.z.rows())),
        beta_(Eigen::VectorXd::Zero(data.z.cols())),
        residual_(data.y_centered),
        lambda_max_(data.retained_index.empty()
                        ? 0.0
                        : (data.z.transpose() * data.y_centered).cwiseAbs().maxCoeff() * inv_n_) {}

  void solve(double lambda, const SweepObserver& observer) {
    sweeps_ = 0;
    // at or above lambda_max the null model is exact; the slack absorbs rounding in lambda_max itself
    if (lambda >= lambda_max_ * (1.0 - 1e-12)) {
      beta_.setZero();
      residual_ = data_.y_centered;
      delta_ = 0.0;
      if (observer) observer(objective(lambda));
      return;
    }
    while (true) {
      delta_ = sweep(data_.retained_index, lambda);
      if (observer) observer(objective(lambda));
      if (delta_ < config_.tol) return;
      if (sweeps_ >= config_.max_iter) throw NonConvergence(sweeps_, delta_);

      active_.clear();
      for (const Eigen::Index j : data_.retained_index)
        if (beta_[j] != 0.0) active_.push_back(j);
      history_.clear();
      history_.push_back(active_coefficients());
      while (true) {
        if (sweeps_ >= config_.max_iter) throw NonConvergence(sweeps_, delta_);
        const double d = sweep(active_, lambda);
        if (observer) observer(objective(lambda));
        if (d < config_.tol) break;
        history_.push_back(active_coefficients());
        if (history_.size() == kAndersonDepth + 1) {
          extrapolate(lambda);
          line_search(active_coefficients() - history_.front(), lambda);
          history_.clear();
          history_.push_back(active_coefficients());
        }
      }
    }
  }

  double kkt_residual(double lambda) const {
    double worst = 0.0;
    for (const Eigen::Index j : data_.retained_index) {
      const double grad = -data_.z.col(j).dot(residual_) * inv_n_;
      const double b = beta_[j];
      const double violation = b != 0.0 ? std::abs(grad + lambda * (b > 0.0 ? 1.0 : -1.0))
                                        : std::max(0.0, std::abs(grad) - lambda);
      worst = std::max(worst, violation);
    }
    return worst;
  }

  double objective(double lambda) const {
    return 0.5 * inv_n_ * residual_.squaredNorm() + lambda * beta_.lpNorm<1>();
  }

  LassoModel model(double lambda) const {
    LassoModel m;
    m.coefficients = beta_;
    m.intercept = data_.y_mean;
    m.lambda = lambda;
    m.column_means = data_.means;
    m.column_sds = data_.sds;
    m.retained = data_.retained;
    m.y_mean = data_.y_mean;
    m.sweeps = sweeps_;
    m.final_delta = delta_;
    m.kkt_residual = kkt_residual(lambda);
    m.warnings = data_.warnings;
    return m;
  }

  const Eigen::VectorXd& residual() const noexcept { return residual_; }

 private:
  double sweep(const std::vector<Eigen::Index>& columns, double lambda) {
    double max_change = 0.0;
    for (const Eigen::Index j : columns) {
      const auto zj = data_.z.col(j);
      const double old = beta_[j];
      const double updated = soft_threshold(zj.dot(residual_) * inv_n_ + old, lambda);
      const double change = updated - old;
      if (change != 0.0) {
        residual_.noalias() -= change * zj;
        beta_[j] = updated;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    ++sweeps_;
    return max_change;
  }

  Eigen::VectorXd active_coefficients() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) out[static_cast<Eigen::Index>(k)] = beta_[active_[k]];
    return out;
  }

  void extrapolate(double lambda) {
    const auto m = static_cast<Eigen::Index>(kAndersonDepth);
    const auto a = static_cast<Eigen::Index>(active_.size());
    if (a == 0) return;
    Eigen::MatrixXd diffs(a, m);
    for (Eigen::Index k = 0; k < m; ++k)
      diffs.col(k) = history_[static_cast<std::size_t>(k) + 1] - history_[static_cast<std::size_t>(k)];
    Eigen::MatrixXd dtd = diffs.transpose() * diffs;
    dtd.diagonal().array() += 1e-10 * std::max(dtd.trace(), std::numeric_limits<double>::min());
    const Eigen::VectorXd weights = dtd.ldlt().solve(Eigen::VectorXd::Ones(m));
    const double total = weights.sum();
    if (!weights.allFinite() || total == 0.0) return;
    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(a);
    for (Eigen::Index k = 0; k < m; ++k)
      candidate += (weights[k] / total) * history_[static_cast<std::size_t>(k) + 1];
    if (!candidate.allFinite()) return;

    Eigen::VectorXd residual = data_.y_centered;
    for (Eigen::Index k = 0; k < a; ++k)
      if (candidate[k] != 0.0) residual.noalias() -= candidate[k] * data_.z.col(active_[static_cast<std::size_t>(k)]);
    const double candidate_objective = 0.5 * inv_n_ * residual.squaredNorm() + lambda * candidate.lpNorm<1>();
    if (!(candidate_objective < objective(lambda))) return;
    for (Eigen::Index k = 0; k < a; ++k) beta_[active_[static_cast<std::size_t>(k)]] = candidate[k];
    residual_ = std::move(residual);
  }

  /// Exact minimization of the objective along beta + t * direction, t >= 0.
  /// The objective is a convex piecewise quadratic in t with kinks where a
  /// coordinate crosses zero; near-degenerate designs make CD creep along such
  /// rays one tiny step per sweep.
  void line_search(const Eigen::VectorXd& direction, double lambda) {
    const auto a = static_cast<Eigen::Index>(active_.size());
    if (a == 0 || !direction.allFinite() || direction.isZero(0.0)) return;
    const Eigen::VectorXd b = active_coefficients();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(data_.z.rows());
    for (Eigen::Index k = 0; k < a; ++k)
      if (direction[k] != 0.0) u.noalias() += direction[k] * data_.z.col(active_[static_cast<std::size_t>(k)]);
    const double curvature = u.squaredNorm() * inv_n_;
    const double pull = residual_.dot(u) * inv_n_;

    // derivative on an open segment is curvature * t - pull + lambda * sum(d_j * sign_j)
    std::vector<std::pair<double, Eigen::Index>> kinks;
    double penalty_slope = 0.0;
    for (Eigen::Index k = 0; k < a; ++k) {
      const double d = direction[k];
      if (d == 0.0) continue;
      const double sign = b[k] > 0.0 ? 1.0 : (b[k] < 0.0 ? -1.0 : (d > 0.0 ? 1.0 : -1.0));
      penalty_slope += lambda * d * sign;
      const double t = -b[k] / d;
      if (t > 0.0) kinks.emplace_back(t, k);
    }
    std::sort(kinks.begin(), kinks.end());

    double start = 0.0;
    double best_t = 0.0;
    for (std::size_t i = 0;; ++i) {
      const double end = i < kinks.size() ? kinks[i].first : std::numeric_limits<double>::infinity();
      const double slope_at_start = curvature * start - pull + penalty_slope;
      if (slope_at_start >= 0.0) {
        best_t = start;
        break;
      }
      if (curvature > 0.0) {
        const double stationary = (pull - penalty_slope) / curvature;
        if (stationary <= end) {
          best_t = stationary;
          break;
        }
      } else if (i == kinks.size()) {
        return;  // unbounded descent cannot happen for a valid objective; bail out
      }
      if (i == kinks.size()) return;
      // crossing zero flips this coordinate's sign contribution from -|d| to +|d|
      penalty_slope += 2.0 * lambda * std::abs(direction[kinks[i].second]);
      start = end;
    }
    if (!(best_t > 0.0) || !std::isfinite(best_t)) return;

    Eigen::VectorXd candidate = b + best_t * direction;
    for (const auto& [t, k] : kinks)
      if (t == best_t) candidate[k] = 0.0;
    Eigen::VectorXd residual = data_.y_centered;
    for (Eigen::Index k = 0; k < a; ++k)
      if (candidate[k] != 0.0) residual.noalias() -= candidate[k] * data_.z.col(active_[static_cast<std::size_t>(k)]);
    const double candidate_objective = 0.5 * inv_n_ * residual.squaredNorm() + lambda * candidate.lpNorm<1>();
    if (!(candidate_objective < objective(lambda))) return;
    for (Eigen::Index k = 0; k < a; ++k) beta_[active_[static_cast<std::size_t>(k)]] = candidate[k];
    residual_ = std::move(residual);
  }

  const Standardized& data_;
  const LassoFitConfig& config_;
  double inv_n_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd residual_;
  std::vector<Eigen::Index> active_;
  std::vector<Eigen::VectorXd> history_;
  double lambda_max_;
  std::size_t sweeps_ = 0;
  double delta_ = 0.0;
};

double lambda_max_of(const Standardized& s) {
  if (s.retained_index.empty()) return 0.0;
  return (s.z.transpose() * s.y_centered).cwiseAbs().maxCoeff() / static_cast<double>(s.z.rows());
}

std::vector<double> grid_from(double lmax, const LassoFitConfig& config) {
  if (!config.lambda_grid.empty()) return config.lambda_grid;
  if (!(lmax > 0.0)) lmax = 1.0;  // y constant or no usable column: every lambda gives the null model
  std::vector<double> grid(config.n_lambda);
  const double log_ratio = std::log(config.lambda_min_ratio);
  for (std::size_t k = 0; k < config.n_lambda; ++k) {
    const double frac = config.n_lambda == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(config.n_lambda - 1);
    grid[k] = lmax * std::exp(frac * log_ratio);
  }
  return grid;
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidInput("lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0) || !std::isfinite(grid[k])) throw InvalidInput("lambda values must be finite and >= 0");
    if (k > 0 && !(grid[k] < grid[k - 1])) throw InvalidInput("lambda grid must be strictly descending");
  }
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = y[rows[r]];
  return out;
}

}  // namespace

void LassoFitConfig::validate() const {
  if (lambda_grid.empty()) {
    if (n_lambda < 1) throw InvalidInput("lasso n_lambda must be >= 1");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio <= 1.0)) throw InvalidInput("lasso lambda_min_ratio must lie in (0, 1]");
    if (n_lambda > 1 && lambda_min_ratio == 1.0) throw InvalidInput("lasso lambda_min_ratio must be < 1 for a multi-point grid");
  } else {
    check_grid(lambda_grid);
  }
  if (cv_folds < 2) throw InvalidInput("lasso cv_folds must be >= 2");
  if (max_iter < 1) throw InvalidInput("lasso max_iter must be >= 1");
  if (!(tol > 0.0)) throw InvalidInput("lasso tol must be > 0");
}

std::size_t LassoModel::nonzero() const {
  return static_cast<std::size_t>((coefficients.array() != 0.0).count());
}

NonConvergence::NonConvergence(std::size_t sweeps, double final_delta)
    : Error(fmt::format("coordinate descent did not converge in {} sweeps (final sweep delta {:.3g})", sweeps,
                        final_delta)),
      final_delta_(final_delta) {}

double soft_threshold(double z, double gamma) noexcept {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) { return lambda_max_of(standardize(X, y)); }

std::vector<double> lambda_grid_for(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFitConfig& config) {
  config.validate();
  if (!config.lambda_grid.empty()) return config.lambda_grid;
  return grid_from(lambda_max(X, y), config);
}

LassoModel lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const LassoFitConfig& config,
                     const SweepObserver& observer) {
  config.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
  const auto data = standardize(X, y);
  CoordinateDescent solver(data, config);
  solver.solve(lambda, observer);
  return solver.model(lambda);
}

std::vector<LassoModel> lasso_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<double>& grid, const LassoFitConfig& config) {
  config.validate();
  check_grid(grid);
  const auto data = standardize(X, y);
  CoordinateDescent solver(data, config);
  std::vector<LassoModel> out;
  out.reserve(grid.size());
  for (const double lambda : grid) {
    solver.solve(lambda, {});
    out.push_back(solver.model(lambda));
  }
  return out;
}

CvSelection lasso_cv_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoFitConfig& config,
                            std::uint64_t /*seed*/) {
  config.validate();
  const Eigen::Index n = X.rows();
  const auto folds = static_cast<Eigen::Index>(config.cv_folds);
  if (n < 2 * folds)
    throw InvalidInput(fmt::format("{} training rows cannot fill {} folds of at least 2", n, folds));

  const auto full = standardize(X, y);
  const auto grid = grid_from(lambda_max_of(full), config);
  check_grid(grid);

  std::vector<double> cv_sum(grid.size(), 0.0);
  double worst_kkt = 0.0;
  for (Eigen::Index f = 0; f < folds; ++f) {
    const Eigen::Index lo = f * n / folds;
    const Eigen::Index hi = (f + 1) * n / folds;
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> valid;
    for (Eigen::Index r = 0; r < n; ++r) (r >= lo && r < hi ? valid : train).push_back(r);
    if (train.size() < 2 || valid.empty()) throw InvalidInput(fmt::format("fold {} too small to fit", f));

    const Eigen::MatrixXd Xv = rows_of(X, valid);
    const Eigen::VectorXd yv = rows_of(y, valid);
    const auto fold_data = standardize(rows_of(X, train), rows_of(y, train));
    CoordinateDescent solver(fold_data, config);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      solver.solve(grid[k], {});
      const auto model = solver.model(grid[k]);
      worst_kkt = std::max(worst_kkt, model.kkt_residual);
      const Eigen::VectorXd pred = lasso_predict(model, Xv);
      cv_sum[k] += (pred - yv).squaredNorm() / static_cast<double>(yv.size());
    }
  }

  CvSelection sel;
  sel.curve.resize(grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    sel.curve[k].lambda = grid[k];
    sel.curve[k].cv_mse = cv_sum[k] / static_cast<double>(folds);
    // strict '<' keeps the earliest (largest) lambda on ties
    if (sel.curve[k].cv_mse < best) {
      best = sel.curve[k].cv_mse;
      sel.best_index = k;
    }
  }
  sel.lambda_best = grid[sel.best_index];

  CoordinateDescent solver(full, config);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    solver.solve(grid[k], {});
    sel.curve[k].train_mse = solver.residual().squaredNorm() / static_cast<double>(n);
    worst_kkt = std::max(worst_kkt, solver.kkt_residual(grid[k]));
    if (k == sel.best_index) sel.model = solver.model(grid[k]);
  }
  sel.max_kkt_residual = worst_kkt;
  return sel;
}

Eigen::VectorXd lasso_predict(const LassoModel& model, const Eigen::MatrixXd& X_new) {
  if (X_new.cols() != model.coefficients.size())
    throw InvalidInput(fmt::format("model has {} columns, input has {}", model.coefficients.size(), X_new.cols()));
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X_new.rows(), model.intercept);
  for (Eigen::Index j = 0; j < X_new.cols(); ++j) {
    const double b = model.coefficients[j];
    if (b == 0.0 || !model.retained[static_cast<std::size_t>(j)]) continue;
    out.array() += (b / model.column_sds[j]) * (X_new.col(j).array() - model.column_means[j]);
  }
  return out;
}

double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::VectorXd r = y - lasso_predict(model, X);
  return 0.5 * r.squaredNorm() / static_cast<double>(X.rows()) + model.lambda * model.coefficients.lpNorm<1>();
}

}  // namespace ppx
