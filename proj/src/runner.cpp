#include "ppx/runner.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "ppx/figures.hpp"

namespace ppx {

namespace {

// Substream ids under master_seed.
constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kNetworkStream = 100;
constexpr std::uint64_t kNoiseCvStream = 200;
constexpr std::uint64_t kNullStream = 300;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_diagnostics(const std::filesystem::path& path, const std::vector<CvResult>& results) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "dataset,block_start,nonzero,kkt_residual,status\n";
  for (const auto& r : results)
    for (const auto& b : r.blocks) {
      // keep error text on one CSV field
      std::string status = b.ok() ? "ok" : b.error;
      for (char& ch : status)
        if (ch == ',' || ch == '\n') ch = ';';
      out << fmt::format("{},{},{},{:.3e},{}\n", r.dataset_label, b.block.start_year, b.nonzero, b.kkt_residual, status);
    }
}

}  // namespace

std::filesystem::path effective_output_dir(const ExperimentConfig& config) {
  if (const char* env = std::getenv("PPX_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 init failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

RunOutcome run_experiment(const ExperimentConfig& config) {
  if (const auto violations = validate_config(config); !violations.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& v : violations) msg += "\n  " + v.to_string();
    throw ConfigError(msg);
  }
  const Exec exec = config.parallel ? Exec::parallel : Exec::serial;

  const GridField field = config.field_path ? load_grid_field(*config.field_path)
                                            : generate_synthetic_field(config.synthetic).field;
  if (config.n_cells > field.n_cells())
    throw ConfigError(fmt::format("n_cells ({}) exceeds the field's {} cells", config.n_cells, field.n_cells()));
  if (field.n_years() < static_cast<std::size_t>(config.block_length) + 1)
    throw ConfigError(fmt::format("block_length {} leaves no training years in a {}-year field", config.block_length,
                                  field.n_years()));
  const YearWindow window = config.resolved_calibration_window(field.first_year(), field.n_years());
  if (window.first < field.first_year() || window.last > field.last_year())
    throw ConfigError(fmt::format("calibration window {}-{} lies outside the field span {}-{}", window.first,
                                  window.last, field.first_year(), field.last_year()));

  const TargetIndex target = nh_mean_index(field);
  const auto blocks = enumerate_blocks(field.first_year(), field.n_years(), config.block_length);
  const auto cells = sample_cells(field, config.n_cells, derive_seed(config.master_seed, kSampleStream));

  RunOutcome outcome;
  outcome.output_dir = effective_output_dir(config);
  std::filesystem::create_directories(outcome.output_dir);
  if (config.write_networks) std::filesystem::create_directories(outcome.output_dir / "networks");

  std::vector<PseudoproxyNetwork> networks;
  for (std::size_t i = 0; i < config.noise_levels.size(); ++i) {
    const auto& ds = config.noise_levels[i];
    auto net = build_network(field, cells, ds.noise, derive_seed(config.master_seed, kNetworkStream + i), exec);
    outcome.cv.push_back(
        run_cv(ds.label, net, target, blocks, config.lasso, derive_seed(config.master_seed, kNoiseCvStream + i), exec));
    outcome.cps.push_back({ds.label, cps_reconstruct(net, target, window)});
    networks.push_back(std::move(net));
  }
  const Eigen::MatrixXd null_template = select_columns(field, cells);
  for (std::size_t j = 0; j < config.null_models.size(); ++j) {
    const auto& ds = config.null_models[j];
    outcome.cv.push_back(run_null_cv(ds.label, ds.spec, null_template, target, blocks, config.lasso,
                                     derive_seed(config.master_seed, kNullStream + j), config.null_draws, exec));
  }
  outcome.summary = summarize(outcome.cv);

  // all computation is done; write outputs single-threaded
  const auto& dir = outcome.output_dir;
  write_cv_results(dir / "cv_results.csv", outcome.cv);
  write_cv_baseline(dir / "cv_baseline.csv", outcome.cv);
  write_cv_summary(dir / "cv_summary.csv", outcome.summary);
  write_diagnostics(dir / "cv_diagnostics.csv", outcome.cv);
  write_cps(dir / "cps.csv", target, outcome.cps);
  write_cps_skill(dir / "cps_skill.csv", outcome.cps);
  outcome.outputs = {"cv_results.csv", "cv_baseline.csv", "cv_summary.csv", "cv_diagnostics.csv",
                     "cps.csv",        "cps_skill.csv"};
  if (config.write_networks) {
    for (std::size_t i = 0; i < networks.size(); ++i) {
      const std::string base = "networks/" + config.noise_levels[i].label;
      write_network(networks[i], dir / base);
      for (const char* suffix : {".cells.csv", ".data.csv", ".provenance.csv"}) outcome.outputs.push_back(base + suffix);
    }
  }
  write_text(dir / "figure1a.svg", render_rmse_boxplot(dir / "cv_results.csv"));
  write_text(dir / "figure1b.svg", render_cps_overlay(dir / "cps.csv", dir / "cps_skill.csv"));
  outcome.outputs.push_back("figure1a.svg");
  outcome.outputs.push_back("figure1b.svg");

  std::size_t failed = 0;
  for (const auto& r : outcome.cv) failed += r.failed_blocks();

  std::string manifest = "# ppx run manifest\n";
  manifest += fmt::format("master_seed = {}\n", config.master_seed);
  manifest += fmt::format("field = {}\n", config.field_path ? config.field_path->string() : "synthetic");
  manifest += fmt::format("span = {}-{}\n", field.first_year(), field.last_year());
  manifest += fmt::format("calibration = {}-{}\n", window.first, window.last);
  manifest += fmt::format("failed_blocks = {}\n", failed);
  manifest += "\n[config]\n" + to_text(config);
  manifest += "\n[sha256]\n";
  for (const auto& name : outcome.outputs) manifest += fmt::format("{}  {}\n", sha256_file(dir / name), name);
  write_text(dir / "manifest.txt", manifest);

  outcome.exit_code = failed > 0 ? kExitPartial : kExitOk;
  return outcome;
}

}  // namespace ppx
