#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ppx/experiment.hpp"
#include "ppx/field.hpp"
#include "ppx/lasso.hpp"
#include "ppx/noise.hpp"

namespace ppx {

struct NoiseDataset {
  std::string label;
  NoiseSpec noise;
};

struct NullDataset {
  std::string label;
  NullModelSpec spec;
};

/// Everything one end-to-end run needs.
///
/// The text form is a flat `key = value` file; list entries use dotted
/// indices (`noise.3.kind = ar1`). Any `noise.*` key replaces the whole
/// default noise list, likewise for `null.<i>.*`.
struct ExperimentConfig {
  std::optional<std::filesystem::path> field_path;  // empty: synthetic field
  SyntheticFieldSpec synthetic = default_synthetic();
  std::size_t n_cells = 283;
  std::vector<NoiseDataset> noise_levels = default_noise_levels();
  std::vector<NullDataset> null_models = default_null_models(283);
  std::size_t null_draws = 1;
  int block_length = 30;
  std::optional<YearWindow> calibration_window;  // empty: default for the field source
  LassoFitConfig lasso;
  std::uint64_t master_seed = 20101;
  std::filesystem::path output_dir = "ppx-out";
  bool write_networks = false;
  bool parallel = true;

  static SyntheticFieldSpec default_synthetic();
  static std::vector<NoiseDataset> default_noise_levels();
  static std::vector<NullDataset> default_null_models(std::size_t n_series);

  /// The configured window, else 1961-1990 for a field file and the final 30
  /// years of a synthetic field.
  YearWindow resolved_calibration_window(int first_year, std::size_t n_years) const;
};

struct Violation {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;

  std::string to_string() const;
};

struct ConfigParse {
  ExperimentConfig config;
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

/// Parses and validates; collects every violation instead of stopping at the first.
ConfigParse parse_config(std::string_view text);

/// Reads `path` and parses it. Throws Error when the file is unreadable.
ConfigParse load_config(const std::filesystem::path& path);

/// Semantic checks on an already-built config.
std::vector<Violation> validate_config(const ExperimentConfig& config);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);

/// Synthetic-field settings only (`synthetic.*` keys plus nothing else), for the `synth` verb.
struct SyntheticParse {
  SyntheticFieldSpec spec;
  std::vector<Violation> violations;
};
SyntheticParse parse_synthetic_spec(std::string_view text);

std::string default_label(const NoiseSpec& noise);

}  // namespace ppx
