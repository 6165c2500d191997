#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ppx/config.hpp"
#include "ppx/error.hpp"
#include "ppx/experiment.hpp"

namespace ppx {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitPartial = 3;

/// Input that passed parsing but cannot be used (e.g. more cells requested
/// than the field bundle holds).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// In-memory view of a finished run. The files in `output_dir` are the
/// authoritative record.
struct RunOutcome {
  int exit_code = kExitOk;
  std::filesystem::path output_dir;
  std::vector<CvResult> cv;  // noise datasets first, then null models, in config order
  std::vector<LabeledCps> cps;
  std::vector<SummaryRow> summary;
  std::vector<std::string> outputs;  // file names relative to output_dir, manifest excluded
};

/// Runs the whole pipeline and writes every CSV, both figures and
/// `manifest.txt` into the output directory (PPX_OUTPUT_DIR overrides it).
/// Throws ConfigError for unusable input and Error for I/O failures.
RunOutcome run_experiment(const ExperimentConfig& config);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// The output directory after applying the PPX_OUTPUT_DIR override.
std::filesystem::path effective_output_dir(const ExperimentConfig& config);

}  // namespace ppx
