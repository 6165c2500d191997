// Serial reference vs OpenMP timings for the data-parallel kernels.
//
//   bench_kernels [--blocks N] [--cells N] [--repeats N]

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <omp.h>

#include "ppx/config.hpp"
#include "ppx/experiment.hpp"

namespace {

template <class F>
double best_of(int repeats, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

void report(const std::string& name, double serial, double parallel, bool same) {
  std::cout << fmt::format("{:<28} {:>10.4f} {:>10.4f} {:>8.2f}x  {}\n", name, serial, parallel, serial / parallel,
                           same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel timings"};
  std::size_t n_blocks = 8;
  std::size_t n_cells = 283;
  int repeats = 3;
  app.add_option("--blocks", n_blocks, "Holdout blocks scored per run_cv call");
  app.add_option("--cells", n_cells, "Predictor count");
  app.add_option("--repeats", repeats, "Timing repeats (best is kept)");
  CLI11_PARSE(app, argc, argv);

  const ppx::ExperimentConfig cfg;
  const auto field = ppx::generate_synthetic_field(cfg.synthetic).field;
  const auto target = ppx::nh_mean_index(field);
  const auto cells = ppx::sample_cells(field, n_cells, 1);
  const auto all_blocks = ppx::enumerate_blocks(field.first_year(), field.n_years(), cfg.block_length);
  std::vector<ppx::HoldoutBlock> blocks;
  for (std::size_t i = 0; i < all_blocks.size() && blocks.size() < n_blocks; i += all_blocks.size() / n_blocks)
    blocks.push_back(all_blocks[i]);

  std::cout << fmt::format("threads: {}  cells: {}  blocks: {}\n", omp_get_max_threads(), n_cells, blocks.size());
  std::cout << fmt::format("{:<28} {:>10} {:>10} {:>9}\n", "kernel", "serial s", "omp s", "speedup");

  const ppx::NoiseSpec red{ppx::NoiseKind::ar1, 0.86, 0.32};
  ppx::PseudoproxyNetwork a, b;
  const double net_s = best_of(repeats, [&] { a = ppx::build_network(field, cells, red, 7, ppx::Exec::serial); });
  const double net_p = best_of(repeats, [&] { b = ppx::build_network(field, cells, red, 7, ppx::Exec::parallel); });
  report("build_network", net_s, net_p, a.series == b.series);

  const auto tmpl = ppx::select_columns(field, cells);
  const ppx::NullModelSpec null{ppx::NullKind::ar1_emp, n_cells};
  const double null_s = best_of(repeats, [&] { a = ppx::build_null_network(tmpl, 1850, null, 7, ppx::Exec::serial); });
  const double null_p = best_of(repeats, [&] { b = ppx::build_null_network(tmpl, 1850, null, 7, ppx::Exec::parallel); });
  report("build_null_network", null_s, null_p, a.series == b.series);

  const auto net = ppx::build_network(field, cells, red, 7);
  ppx::CvResult rs, rp;
  const double cv_s = best_of(1, [&] { rs = ppx::run_cv("red86", net, target, blocks, cfg.lasso, 3, ppx::Exec::serial); });
  const double cv_p = best_of(1, [&] { rp = ppx::run_cv("red86", net, target, blocks, cfg.lasso, 3, ppx::Exec::parallel); });
  bool same = rs.blocks.size() == rp.blocks.size();
  for (std::size_t i = 0; same && i < rs.blocks.size(); ++i)
    same = rs.blocks[i].rmse == rp.blocks[i].rmse && rs.blocks[i].lambda == rp.blocks[i].lambda;
  report("run_cv", cv_s, cv_p, same);
  return 0;
}
