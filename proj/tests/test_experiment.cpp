#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ppx/error.hpp"
#include "ppx/experiment.hpp"
#include "test_util.hpp"

using ppx::Exec;
using ppx::HoldoutBlock;

namespace {

struct Scene {
  ppx::GridField field;
  ppx::TargetIndex target;
  std::vector<std::size_t> cells;
};

// Small field so each run_cv stays well under a second.
Scene small_scene(double local_noise = 0.6, std::size_t n_cells = 160, std::size_t n_years = 70,
                  std::size_t sample = 40, double trend = 0.03, double rho = 0.8) {
  ppx::SyntheticFieldSpec spec;
  spec.n_cells = n_cells;
  spec.n_years = n_years;
  spec.signal_rho = rho;
  spec.trend = trend;
  spec.loading_min = 0.5;
  spec.loading_max = 1.5;
  spec.local_noise_sd = local_noise;
  spec.seed = 99;
  auto field = ppx::generate_synthetic_field(spec).field;
  auto target = ppx::nh_mean_index(field);
  auto cells = ppx::sample_cells(field, sample, 5);
  return {std::move(field), std::move(target), std::move(cells)};
}

ppx::PseudoproxyNetwork network_of(const Eigen::MatrixXd& series, int first_year) {
  ppx::PseudoproxyNetwork net;
  net.first_year = first_year;
  net.series = series;
  net.provenance.resize(static_cast<std::size_t>(series.cols()));
  net.coords.resize(static_cast<std::size_t>(series.cols()));
  return net;
}

std::vector<double> rmses(const ppx::CvResult& r) {
  std::vector<double> out;
  for (const auto& b : r.blocks) out.push_back(b.rmse);
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return ppx::quantile_sorted(v, 0.5);
}

ppx::LassoFitConfig fast_lasso() {
  ppx::LassoFitConfig c;
  c.n_lambda = 40;
  c.cv_folds = 5;
  return c;
}

}  // namespace

TEST_CASE("enumerate_blocks") {
  const auto blocks = ppx::enumerate_blocks(1850, 149, 30);
  REQUIRE(blocks.size() == 120);
  CHECK(blocks.front() == HoldoutBlock{1850, 30});
  CHECK(blocks.back() == HoldoutBlock{1969, 30});
  CHECK(blocks.back().end_year() == 1998);
  for (std::size_t i = 1; i < blocks.size(); ++i) CHECK(blocks[i].start_year == blocks[i - 1].start_year + 1);

  CHECK(ppx::enumerate_blocks(1900, 31, 30).size() == 2);
  CHECK_THROWS_AS(ppx::enumerate_blocks(1900, 30, 30), ppx::InvalidInput);
  CHECK_THROWS_AS(ppx::enumerate_blocks(1900, 40, 1), ppx::InvalidInput);
}

TEST_CASE("blocks cover every year once the span allows it") {
  for (int len : {2, 5, 30}) {
    for (std::size_t n : {static_cast<std::size_t>(2 * len - 1), static_cast<std::size_t>(3 * len)}) {
      const auto blocks = ppx::enumerate_blocks(0, n, len);
      CHECK(blocks.size() == n - static_cast<std::size_t>(len) + 1);
      for (int y = 0; y < static_cast<int>(n); ++y)
        CHECK(std::any_of(blocks.begin(), blocks.end(), [&](const HoldoutBlock& b) { return b.contains(y); }));
    }
  }
}

TEST_CASE("rmse and pearson") {
  const std::vector<double> x{0.3, -1.0, 2.5, 4.0};
  CHECK(ppx::rmse(x, x) == 0.0);
  CHECK(ppx::rmse(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1}) == 1.0);
  std::vector<double> lin;
  for (double v : x) lin.push_back(2.0 * v + 3.0);
  CHECK(ppx::pearson(x, lin) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ppx::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == -1.0);
  CHECK_THROWS_AS(ppx::rmse(x, std::vector<double>{1, 2}), ppx::InvalidInput);
  CHECK_THROWS_AS(ppx::pearson(x, std::vector<double>(4, 1.0)), ppx::InvalidInput);
}

TEST_CASE("quantiles interpolate at (n - 1) p") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(ppx::quantile_sorted(v, 0.25) == 2.0);
  CHECK(ppx::quantile_sorted(v, 0.5) == 3.0);
  CHECK(ppx::quantile_sorted(v, 0.75) == 4.0);
  const std::vector<double> even{1, 2, 3, 4};
  CHECK(ppx::quantile_sorted(even, 0.5) == 2.5);
  CHECK(ppx::quantile_sorted(even, 0.25) == 1.75);
}

TEST_CASE("summarize") {
  ppx::CvResult a;
  a.dataset_label = "zeta";
  for (double r : {5.0, 1.0, 4.0, 2.0, 3.0}) a.blocks.push_back({{1900, 30}, r, 0.1});
  ppx::CvResult b;
  b.dataset_label = "alpha";
  for (int i = 0; i < 4; ++i) b.blocks.push_back({{1900 + i, 30}, 0.7, 0.1});
  ppx::BlockRecord failed{{1910, 30}, std::nan(""), std::nan("")};
  failed.error = "boom";
  b.blocks.push_back(failed);

  const std::vector<ppx::CvResult> results{a, b};
  const auto rows = ppx::summarize(results);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].dataset_label == "alpha");
  CHECK(rows[0].n_blocks == 5);
  CHECK(rows[0].n_failed == 1);
  for (double s : {rows[0].min, rows[0].q1, rows[0].median, rows[0].q3, rows[0].max, rows[0].mean}) CHECK(s == 0.7);
  CHECK(rows[1].median == 3.0);
  CHECK(rows[1].q1 == 2.0);
  CHECK(rows[1].q3 == 4.0);
  CHECK(rows[1].min == 1.0);
  CHECK(rows[1].max == 5.0);
  CHECK(rows[1].mean == 3.0);
}

TEST_CASE("run_cv recovers a target that is one of the predictors") {
  const auto s = small_scene(0.6, 160, 60, 12);
  Eigen::MatrixXd x = ppx::select_columns(s.field, s.cells);
  x.col(4) = s.target.values;
  const auto net = network_of(x, s.field.first_year());
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  ppx::LassoFitConfig cfg;
  cfg.lambda_min_ratio = 1e-8;  // the smallest-lambda fit is shrunk by lambda itself
  cfg.tol = 1e-12;
  const auto r = ppx::run_cv("exact", net, s.target, blocks, cfg, 1);
  REQUIRE(r.blocks.size() == blocks.size());
  for (const auto& b : r.blocks) {
    CHECK(b.ok());
    CHECK(b.rmse < 1e-6);
  }
}

TEST_CASE("run_cv records one block per holdout in block order") {
  const auto s = small_scene();
  const auto net = ppx::build_network(s.field, s.cells, {ppx::NoiseKind::white, 0.5, 0.0}, 3);
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  const auto r = ppx::run_cv("w50", net, s.target, blocks, fast_lasso(), 7);
  CHECK(r.dataset_label == "w50");
  CHECK(r.seed == 7);
  REQUIRE(r.blocks.size() == blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    CHECK(r.blocks[i].block == blocks[i]);
    CHECK(r.blocks[i].ok());
    CHECK(std::isfinite(r.blocks[i].rmse));
    CHECK(r.blocks[i].rmse >= 0.0);
    CHECK(r.blocks[i].lambda > 0.0);
    CHECK(r.blocks[i].kkt_residual < 10 * fast_lasso().tol);
  }
  CHECK(r.failed_blocks() == 0);
}

TEST_CASE("block scores match an independent refit") {
  const auto s = small_scene();
  const auto net = ppx::build_network(s.field, s.cells, {ppx::NoiseKind::white, 0.8, 0.0}, 3);
  const HoldoutBlock block{s.target.first_year + 17, 20};
  const auto cfg = fast_lasso();
  const auto r = ppx::run_cv("w80", net, s.target, std::vector<HoldoutBlock>{block}, cfg, 7);

  std::vector<Eigen::Index> train, test;
  for (Eigen::Index t = 0; t < net.series.rows(); ++t)
    (block.contains(s.target.first_year + static_cast<int>(t)) ? test : train).push_back(t);
  Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), net.series.cols());
  Eigen::VectorXd yt(static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    xt.row(static_cast<Eigen::Index>(i)) = net.series.row(train[i]);
    yt[static_cast<Eigen::Index>(i)] = s.target.values[train[i]];
  }
  const auto sel = ppx::lasso_cv_select(xt, yt, cfg, 0);
  const Eigen::MatrixXd xb = net.series.middleRows(test.front(), 20);
  const Eigen::VectorXd yb = s.target.values.segment(test.front(), 20);
  const Eigen::VectorXd pred = ppx::lasso_predict(sel.model, xb);
  CHECK(r.blocks[0].lambda == sel.lambda_best);
  CHECK(r.blocks[0].rmse == doctest::Approx(std::sqrt((pred - yb).squaredNorm() / 20.0)).epsilon(1e-12));
  CHECK(r.blocks[0].baseline_rmse ==
        doctest::Approx(std::sqrt((yb.array() - yt.mean()).square().mean())).epsilon(1e-12));
}

TEST_CASE("run_cv is deterministic and execution-independent") {
  const auto s = small_scene();
  const auto net = ppx::build_network(s.field, s.cells, {ppx::NoiseKind::ar1, 0.86, 0.32}, 4);
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  const auto a = ppx::run_cv("r", net, s.target, blocks, fast_lasso(), 11, Exec::serial);
  const auto b = ppx::run_cv("r", net, s.target, blocks, fast_lasso(), 11, Exec::parallel);
  CHECK(rmses(a) == rmses(b));
  for (std::size_t i = 0; i < a.blocks.size(); ++i) CHECK(a.blocks[i].lambda == b.blocks[i].lambda);
}

TEST_CASE("solver failures are recorded per block") {
  const auto s = small_scene();
  const auto net = ppx::build_network(s.field, s.cells, {ppx::NoiseKind::white, 0.5, 0.0}, 3);
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  auto cfg = fast_lasso();
  cfg.max_iter = 1;
  const auto r = ppx::run_cv("starved", net, s.target, blocks, cfg, 7);
  REQUIRE(r.blocks.size() == blocks.size());
  CHECK(r.failed_blocks() == blocks.size());
  CHECK(std::isnan(r.blocks[0].rmse));
  CHECK(r.blocks[0].error.find("converge") != std::string::npos);
}

TEST_CASE("run_cv input errors") {
  const auto s = small_scene();
  const auto net = ppx::build_network(s.field, s.cells, {}, 3);
  ppx::TargetIndex shifted = s.target;
  shifted.first_year += 1;
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  CHECK_THROWS_AS(ppx::run_cv("x", net, shifted, blocks, fast_lasso(), 1), ppx::InvalidInput);
  const std::vector<HoldoutBlock> outside{{s.target.first_year - 1, 20}};
  CHECK_THROWS_AS(ppx::run_cv("x", net, s.target, outside, fast_lasso(), 1), ppx::InvalidInput);
}

TEST_CASE("noise-free predictors beat climatology") {
  const auto s = small_scene(0.6, 160, 70, 40);
  const auto net = ppx::build_network(s.field, s.cells, {}, 3);
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  const auto r = ppx::run_cv("none", net, s.target, blocks, fast_lasso(), 7);
  const double med = median(rmses(r));
  std::size_t below = 0;
  for (const auto& b : r.blocks) below += med < b.baseline_rmse ? 1 : 0;
  CHECK(below >= (9 * r.blocks.size() + 9) / 10);
  std::size_t beat = 0;
  for (const auto& b : r.blocks) beat += b.rmse < b.baseline_rmse ? 1 : 0;
  CHECK(beat == r.blocks.size());
}

TEST_CASE("median RMSE rises with white-noise fraction") {
  const auto s = small_scene(0.6, 160, 70, 40);
  const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
  double prev = 0.0;
  std::size_t i = 0;
  for (double f : {0.0, 0.5, 0.8, 0.94}) {
    const ppx::NoiseSpec spec{f == 0.0 ? ppx::NoiseKind::none : ppx::NoiseKind::white, f, 0.0};
    const auto net = ppx::build_network(s.field, s.cells, spec, ppx::derive_seed(3, i++));
    const double med = median(rmses(ppx::run_cv("w", net, s.target, blocks, fast_lasso(), 7)));
    CAPTURE(f);
    CHECK(med > prev);
    prev = med;
  }
}

TEST_CASE("null models") {
  SUBCASE("brownian tests well on a trending target") {
    const auto s = small_scene(0.6, 160, 70, 40, 0.05, 0.95);
    const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
    const auto tmpl = ppx::select_columns(s.field, s.cells);
    const auto r = ppx::run_null_cv("brownian", {ppx::NullKind::brownian, 40}, tmpl, s.target, blocks, fast_lasso(), 5);
    const double med = median(rmses(r));
    std::size_t below = 0;
    for (const auto& b : r.blocks) below += med < b.baseline_rmse ? 1 : 0;
    CHECK(2 * below > r.blocks.size());
  }
  SUBCASE("white-noise surrogates match climatology") {
    // no trend and a rho-free template: nothing to learn
    auto s = small_scene(0.6, 160, 70, 40, 0.0);
    ppx::Rng rng(3);
    Eigen::MatrixXd tmpl(70, 40);
    for (auto& v : tmpl.reshaped()) v = rng.normal();
    const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
    const auto r = ppx::run_null_cv("ar1_emp", {ppx::NullKind::ar1_emp, 40}, tmpl, s.target, blocks, fast_lasso(), 5);
    std::vector<double> base;
    for (const auto& b : r.blocks) base.push_back(b.baseline_rmse);
    CHECK(median(rmses(r)) == doctest::Approx(median(base)).epsilon(0.10));
  }
  SUBCASE("draws are averaged and deterministic") {
    const auto s = small_scene();
    const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
    const auto tmpl = ppx::select_columns(s.field, s.cells);
    const ppx::NullModelSpec spec{ppx::NullKind::ar1_emp, 20};
    const auto one = ppx::run_null_cv("a", spec, tmpl, s.target, blocks, fast_lasso(), 5, 1, Exec::serial);
    const auto again = ppx::run_null_cv("a", spec, tmpl, s.target, blocks, fast_lasso(), 5, 1, Exec::parallel);
    CHECK(rmses(one) == rmses(again));
    const auto two = ppx::run_null_cv("a", spec, tmpl, s.target, blocks, fast_lasso(), 5, 2);
    // draw 0 of a 2-draw run is the single-draw run
    for (std::size_t i = 0; i < blocks.size(); ++i) CHECK(two.blocks[i].rmse != one.blocks[i].rmse);
  }
  SUBCASE("errors") {
    const auto s = small_scene();
    const auto blocks = ppx::enumerate_blocks(s.target.first_year, s.target.n_years(), 20);
    const auto tmpl = ppx::select_columns(s.field, s.cells);
    CHECK_THROWS_AS(ppx::run_null_cv("a", {ppx::NullKind::brownian, 0}, tmpl, s.target, blocks, fast_lasso(), 5),
                    ppx::InvalidInput);
    CHECK_THROWS_AS(ppx::run_null_cv("a", {ppx::NullKind::brownian, 3}, tmpl, s.target, blocks, fast_lasso(), 5, 0),
                    ppx::InvalidInput);
  }
}

TEST_CASE("CPS") {
  const auto s = small_scene(0.6, 300, 80, 120);
  const ppx::YearWindow window{s.field.last_year() - 29, s.field.last_year()};
  const auto cal = [&](const Eigen::VectorXd& v) {
    return v.segment(window.first - s.field.first_year(), window.last - window.first + 1);
  };
  const auto sd = [](const Eigen::VectorXd& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
  };

  SUBCASE("calibration identities") {
    for (double f : {0.0, 0.5, 0.94}) {
      const ppx::NoiseSpec spec{f == 0.0 ? ppx::NoiseKind::none : ppx::NoiseKind::white, f, 0.0};
      const auto net = ppx::build_network(s.field, s.cells, spec, 8);
      const auto cps = ppx::cps_reconstruct(net, s.target, window);
      const Eigen::VectorXd rc = cal(cps.values), tc = cal(s.target.values);
      CHECK(std::abs(rc.mean() - tc.mean()) <= 1e-10);
      CHECK(std::abs(sd(rc) - sd(tc)) <= 1e-8);
      CHECK(cps.calibration_window == window);
      CHECK(cps.values.size() == s.target.values.size());
    }
  }
  SUBCASE("only NH series enter the composite") {
    const auto net = ppx::build_network(s.field, s.cells, {}, 8);
    std::size_t nh = 0;
    for (const auto& c : net.coords) nh += c->northern() ? 1 : 0;
    CHECK(ppx::cps_reconstruct(net, s.target, window).n_predictors == nh);
  }
  SUBCASE("single perfect predictor") {
    auto net = network_of(s.target.values, s.target.first_year);
    net.coords[0] = ppx::CellCoord{47.5, 2.5};
    const auto cps = ppx::cps_reconstruct(net, s.target, window);
    CHECK(cps.correlation_with_target == 1.0);
    CHECK((cps.values - s.target.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("correlation falls as noise rises") {
    double prev = 1.1;
    for (double f : {0.0, 0.5, 0.8, 0.94}) {
      const ppx::NoiseSpec spec{f == 0.0 ? ppx::NoiseKind::none : ppx::NoiseKind::white, f, 0.0};
      const auto r = ppx::cps_reconstruct(ppx::build_network(s.field, s.cells, spec, 8), s.target, window);
      CAPTURE(f);
      CHECK(r.correlation_with_target <= prev);
      prev = r.correlation_with_target;
    }
  }
  SUBCASE("zero-variance series are dropped with a warning") {
    auto net = ppx::build_network(s.field, s.cells, {}, 8);
    Eigen::Index nh_col = 0;
    while (!net.coords[static_cast<std::size_t>(nh_col)]->northern()) ++nh_col;
    net.series.col(nh_col).setConstant(1.0);
    const auto full = ppx::cps_reconstruct(ppx::build_network(s.field, s.cells, {}, 8), s.target, window);
    const auto r = ppx::cps_reconstruct(net, s.target, window);
    CHECK(r.n_predictors + 1 == full.n_predictors);
    CHECK_FALSE(r.warnings.empty());
  }
  SUBCASE("errors") {
    auto net = network_of(s.target.values, s.target.first_year);
    net.coords[0] = ppx::CellCoord{-47.5, 2.5};
    CHECK_THROWS_AS(ppx::cps_reconstruct(net, s.target, window), ppx::InvalidInput);
    net.coords[0] = ppx::CellCoord{47.5, 2.5};
    CHECK_THROWS_AS(ppx::cps_reconstruct(net, s.target, {1700, 1750}), ppx::InvalidInput);
  }
}

TEST_CASE("CSV writers") {
  testutil::TempDir dir("csv");
  ppx::CvResult a;
  a.dataset_label = "none";
  a.blocks.push_back({{1850, 30}, 0.25, 0.125, 1.5});
  ppx::BlockRecord bad{{1851, 30}, std::nan(""), std::nan(""), 1.0};
  bad.error = "x";
  a.blocks.push_back(bad);
  const std::vector<ppx::CvResult> results{a};
  ppx::write_cv_results(dir / "cv.csv", results);
  CHECK(testutil::read_file(dir / "cv.csv") ==
        "dataset,block_start,block_len,rmse,lambda\nnone,1850,30,0.25,0.125\nnone,1851,30,nan,nan\n");
  ppx::write_cv_baseline(dir / "base.csv", results);
  CHECK(testutil::read_file(dir / "base.csv") ==
        "dataset,block_start,block_len,baseline_rmse\nnone,1850,30,1.5\nnone,1851,30,1\n");

  ppx::TargetIndex target{2000, Eigen::Vector3d(1.0, 2.0, 3.0)};
  ppx::CpsReconstruction cps;
  cps.first_year = 2000;
  cps.values = Eigen::Vector3d(1.5, 2.0, 2.5);
  cps.correlation_with_target = 1.0;
  cps.n_predictors = 4;
  const std::vector<ppx::LabeledCps> recs{{"red86", cps}};
  ppx::write_cps(dir / "cps.csv", target, recs);
  CHECK(testutil::read_file(dir / "cps.csv") ==
        "dataset,year,target,reconstruction\nred86,2000,1,1.5\nred86,2001,2,2\nred86,2002,3,2.5\n");
  ppx::write_cps_skill(dir / "skill.csv", recs);
  CHECK(testutil::read_file(dir / "skill.csv") == "dataset,correlation,n_predictors\nred86,1,4\n");
}
