#include "ppx/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "parallel.hpp"
#include "ppx/error.hpp"

namespace ppx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.10g}", v == 0.0 ? 0.0 : v);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

Eigen::Index window_offset(int first_year, std::size_t n_years, const YearWindow& w) {
  const int last_year = first_year + static_cast<int>(n_years) - 1;
  if (w.first > w.last || w.first < first_year || w.last > last_year)
    throw InvalidInput(fmt::format("calibration window {}-{} is not inside {}-{}", w.first, w.last, first_year, last_year));
  if (w.last - w.first + 1 < 2) throw InvalidInput("calibration window needs at least 2 years");
  return w.first - first_year;
}

double mean_of(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.mean(); }

double sd_of(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

std::size_t CvResult::failed_blocks() const {
  return static_cast<std::size_t>(std::count_if(blocks.begin(), blocks.end(), [](const auto& b) { return !b.ok(); }));
}

std::vector<HoldoutBlock> enumerate_blocks(int first_year, std::size_t n_years, int block_length) {
  if (block_length < 2) throw InvalidInput(fmt::format("block_length must be >= 2, got {}", block_length));
  if (n_years < static_cast<std::size_t>(block_length) + 1)
    throw InvalidInput(fmt::format("a {}-year span cannot hold a {}-year block plus a training year", n_years, block_length));
  const std::size_t count = n_years - static_cast<std::size_t>(block_length) + 1;
  std::vector<HoldoutBlock> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back({first_year + static_cast<int>(k), block_length});
  return out;
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput(fmt::format("rmse length mismatch: {} vs {}", a.size(), b.size()));
  if (a.size() < 2) throw InvalidInput("rmse needs at least 2 values");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(ss / static_cast<double>(a.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput(fmt::format("pearson length mismatch: {} vs {}", a.size(), b.size()));
  if (a.size() < 2) throw InvalidInput("pearson needs at least 2 values");
  // extended-precision accumulation: exactly affine inputs come out as +-1 after rounding
  using wide = long double;
  const auto n = static_cast<wide>(a.size());
  wide ma = 0.0L;
  wide mb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  wide sab = 0.0L;
  wide saa = 0.0L;
  wide sbb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const wide da = a[i] - ma;
    const wide db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0L) || !(sbb > 0.0L)) throw InvalidInput("pearson of a zero-variance series");
  const auto r = static_cast<double>(sab / std::sqrt(saa * sbb));
  return std::clamp(r, -1.0, 1.0);
}

double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return rmse(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
              std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return pearson(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                 std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

CvResult run_cv(const std::string& label, const PseudoproxyNetwork& network, const TargetIndex& target,
                std::span<const HoldoutBlock> blocks, const LassoFitConfig& config, std::uint64_t seed, Exec exec) {
  config.validate();
  if (network.first_year != target.first_year || network.n_years() != target.n_years())
    throw InvalidInput(fmt::format("network spans {}+{} years but target spans {}+{}", network.first_year,
                                   network.n_years(), target.first_year, target.n_years()));
  if (network.n_series() < 1) throw InvalidInput("network has no series");
  const int first = target.first_year;
  const int last = target.last_year();
  for (const auto& b : blocks)
    if (b.length < 2 || b.start_year < first || b.end_year() > last || b.length >= static_cast<int>(target.n_years()))
      throw InvalidInput(fmt::format("block {}+{} does not fit inside {}-{} with training years left", b.start_year,
                                     b.length, first, last));

  CvResult result;
  result.dataset_label = label;
  result.seed = seed;
  result.blocks.resize(blocks.size());

  const auto n = static_cast<Eigen::Index>(target.n_years());
  detail::for_each_index(blocks.size(), exec, [&](std::size_t i) {
    const HoldoutBlock& block = blocks[i];
    BlockRecord& rec = result.blocks[i];
    rec.block = block;
    rec.tol = config.tol;

    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> hold;
    for (Eigen::Index r = 0; r < n; ++r) (block.contains(first + static_cast<int>(r)) ? hold : train).push_back(r);
    for (const auto r : train)
      if (block.contains(first + static_cast<int>(r))) throw std::logic_error("holdout year leaked into training rows");

    Eigen::MatrixXd x_train(static_cast<Eigen::Index>(train.size()), network.series.cols());
    Eigen::VectorXd y_train(static_cast<Eigen::Index>(train.size()));
    for (std::size_t k = 0; k < train.size(); ++k) {
      x_train.row(static_cast<Eigen::Index>(k)) = network.series.row(train[k]);
      y_train[static_cast<Eigen::Index>(k)] = target.values[train[k]];
    }
    Eigen::MatrixXd x_hold(static_cast<Eigen::Index>(hold.size()), network.series.cols());
    Eigen::VectorXd y_hold(static_cast<Eigen::Index>(hold.size()));
    for (std::size_t k = 0; k < hold.size(); ++k) {
      x_hold.row(static_cast<Eigen::Index>(k)) = network.series.row(hold[k]);
      y_hold[static_cast<Eigen::Index>(k)] = target.values[hold[k]];
    }

    rec.baseline_rmse = rmse(Eigen::VectorXd::Constant(y_hold.size(), y_train.mean()), y_hold);
    try {
      const auto sel = lasso_cv_select(x_train, y_train, config, derive_seed(seed, static_cast<std::uint64_t>(block.start_year)));
      rec.rmse = rmse(lasso_predict(sel.model, x_hold), y_hold);
      rec.lambda = sel.lambda_best;
      rec.kkt_residual = sel.max_kkt_residual;
      rec.nonzero = sel.model.nonzero();
    } catch (const Error& e) {
      rec.rmse = kNaN;
      rec.lambda = kNaN;
      rec.kkt_residual = kNaN;
      rec.error = e.what();
    }
  });
  return result;
}

CvResult run_null_cv(const std::string& label, const NullModelSpec& spec, const Eigen::MatrixXd& template_series,
                     const TargetIndex& target, std::span<const HoldoutBlock> blocks, const LassoFitConfig& config,
                     std::uint64_t seed, std::size_t draws, Exec exec) {
  spec.validate();
  if (draws < 1) throw InvalidInput("null model draws must be >= 1");
  if (static_cast<std::size_t>(template_series.rows()) != target.n_years())
    throw InvalidInput("null model template and target differ in length");

  CvResult combined;
  for (std::size_t d = 0; d < draws; ++d) {
    const std::uint64_t draw_seed = derive_seed(seed, d);
    const auto net = build_null_network(template_series, target.first_year, spec, draw_seed, exec);
    auto result = run_cv(label, net, target, blocks, config, draw_seed, exec);
    if (d == 0) {
      combined = std::move(result);
      continue;
    }
    for (std::size_t i = 0; i < combined.blocks.size(); ++i) {
      auto& acc = combined.blocks[i];
      const auto& rec = result.blocks[i];
      if (!rec.ok() && acc.ok()) acc.error = rec.error;
      acc.rmse += rec.rmse;
      acc.lambda += rec.lambda;
      acc.kkt_residual = std::max(acc.kkt_residual, rec.kkt_residual);
      acc.nonzero += rec.nonzero;
    }
  }
  if (draws > 1) {
    const auto k = static_cast<double>(draws);
    for (auto& acc : combined.blocks) {
      acc.rmse = acc.ok() ? acc.rmse / k : kNaN;
      acc.lambda = acc.ok() ? acc.lambda / k : kNaN;
      acc.nonzero = static_cast<std::size_t>(std::lround(static_cast<double>(acc.nonzero) / k));
    }
  }
  combined.seed = seed;
  return combined;
}

CpsReconstruction cps_reconstruct(const PseudoproxyNetwork& network, const TargetIndex& target,
                                  const YearWindow& calibration_window) {
  return cps_reconstruct(network, network.coords, target, calibration_window);
}

CpsReconstruction cps_reconstruct(const PseudoproxyNetwork& network,
                                  std::span<const std::optional<CellCoord>> coords, const TargetIndex& target,
                                  const YearWindow& calibration_window) {
  if (coords.size() != network.n_series()) throw InvalidInput("coords length differs from network series count");
  if (network.first_year != target.first_year || network.n_years() != target.n_years())
    throw InvalidInput("network and target spans differ");
  const Eigen::Index offset = window_offset(target.first_year, target.n_years(), calibration_window);
  const Eigen::Index len = calibration_window.last - calibration_window.first + 1;

  CpsReconstruction out;
  out.first_year = target.first_year;
  out.calibration_window = calibration_window;

  const Eigen::Index n = network.series.rows();
  Eigen::VectorXd composite = Eigen::VectorXd::Zero(n);
  double weight_sum = 0.0;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    if (!coords[k] || !coords[k]->northern()) continue;
    const auto col = network.series.col(static_cast<Eigen::Index>(k));
    const auto cal = col.segment(offset, len);
    const double sd = sd_of(cal);
    if (!(sd > 0.0)) {
      out.warnings.push_back(fmt::format("series {} has zero variance in the calibration window; dropped", k));
      continue;
    }
    const double w = std::cos(coords[k]->lat * std::numbers::pi / 180.0);
    composite.array() += w * (col.array() - mean_of(cal)) / sd;
    weight_sum += w;
    ++out.n_predictors;
  }
  if (out.n_predictors == 0) throw InvalidInput("no usable Northern Hemisphere series for CPS");
  composite /= weight_sum;

  const auto comp_cal = composite.segment(offset, len);
  const double comp_sd = sd_of(comp_cal);
  if (!(comp_sd > 0.0)) throw InvalidInput("CPS composite is constant over the calibration window");
  const auto target_cal = target.values.segment(offset, len);
  const double target_mean = mean_of(target_cal);
  const double scale = sd_of(target_cal) / comp_sd;
  out.values = ((composite.array() - mean_of(comp_cal)) * scale).matrix();
  // recentre on the realised calibration mean so the match survives rounding
  out.values.array() += target_mean - mean_of(out.values.segment(offset, len));
  out.correlation_with_target = pearson(out.values, target.values);
  return out;
}

std::vector<SummaryRow> summarize(std::span<const CvResult> results) {
  std::vector<SummaryRow> rows;
  rows.reserve(results.size());
  for (const auto& r : results) {
    SummaryRow row;
    row.dataset_label = r.dataset_label;
    row.n_blocks = r.blocks.size();
    std::vector<double> v;
    for (const auto& b : r.blocks) {
      if (b.ok() && std::isfinite(b.rmse))
        v.push_back(b.rmse);
      else
        ++row.n_failed;
    }
    if (v.empty()) {
      row.min = row.q1 = row.median = row.q3 = row.max = row.mean = kNaN;
    } else {
      std::sort(v.begin(), v.end());
      row.min = v.front();
      row.max = v.back();
      row.q1 = quantile_sorted(v, 0.25);
      row.median = quantile_sorted(v, 0.5);
      row.q3 = quantile_sorted(v, 0.75);
      double sum = 0.0;
      for (double x : v) sum += x;
      row.mean = sum / static_cast<double>(v.size());
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SummaryRow& a, const SummaryRow& b) { return a.dataset_label < b.dataset_label; });
  return rows;
}

void write_cv_results(const std::filesystem::path& path, std::span<const CvResult> results) {
  auto out = open_out(path);
  out << "dataset,block_start,block_len,rmse,lambda\n";
  for (const auto& r : results)
    for (const auto& b : r.blocks)
      out << fmt::format("{},{},{},{},{}\n", r.dataset_label, b.block.start_year, b.block.length, num(b.rmse),
                         num(b.lambda));
}

void write_cv_baseline(const std::filesystem::path& path, std::span<const CvResult> results) {
  auto out = open_out(path);
  out << "dataset,block_start,block_len,baseline_rmse\n";
  for (const auto& r : results)
    for (const auto& b : r.blocks)
      out << fmt::format("{},{},{},{}\n", r.dataset_label, b.block.start_year, b.block.length, num(b.baseline_rmse));
}

void write_cv_summary(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  auto out = open_out(path);
  out << "dataset,n_blocks,n_failed,min,q1,median,q3,max,mean\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.dataset_label, r.n_blocks, r.n_failed, num(r.min), num(r.q1),
                       num(r.median), num(r.q3), num(r.max), num(r.mean));
}

void write_cps(const std::filesystem::path& path, const TargetIndex& target, std::span<const LabeledCps> recs) {
  auto out = open_out(path);
  out << "dataset,year,target,reconstruction\n";
  for (const auto& rec : recs)
    for (Eigen::Index t = 0; t < rec.cps.values.size(); ++t)
      out << fmt::format("{},{},{},{}\n", rec.dataset_label, rec.cps.first_year + static_cast<int>(t),
                         num(target.values[t]), num(rec.cps.values[t]));
}

void write_cps_skill(const std::filesystem::path& path, std::span<const LabeledCps> recs) {
  auto out = open_out(path);
  out << "dataset,correlation,n_predictors\n";
  for (const auto& rec : recs)
    out << fmt::format("{},{},{}\n", rec.dataset_label, num(rec.cps.correlation_with_target), rec.cps.n_predictors);
}

}  // namespace ppx
