#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ppx {

/// Centre of a 5x5 degree grid cell.
struct CellCoord {
  double lat = 0.0;
  double lon = 0.0;

  bool northern() const noexcept { return lat > 0.0; }
  friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

/// True when both coordinates sit on a 5 degree cell centre within the valid range.
bool on_grid(const CellCoord& c) noexcept;

/// Annual anomaly series for a set of grid cells. Immutable after construction.
///
/// Rows are consecutive calendar years starting at `first_year`, columns follow
/// the order of `cells`. The constructor enforces the invariants (unique on-grid
/// cells, at least 31 years, every value finite) and throws InvalidInput.
class GridField {
 public:
  static constexpr std::size_t kMinYears = 31;

  GridField(std::vector<CellCoord> cells, int first_year, Eigen::MatrixXd values);

  const std::vector<CellCoord>& cells() const noexcept { return cells_; }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  int first_year() const noexcept { return first_year_; }
  int last_year() const noexcept { return first_year_ + static_cast<int>(n_years()) - 1; }
  std::size_t n_years() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_cells() const noexcept { return cells_.size(); }
  std::vector<int> years() const;

 private:
  std::vector<CellCoord> cells_;
  int first_year_;
  Eigen::MatrixXd values_;
};

/// Yearly NH mean index (or any target series aligned with a field).
struct TargetIndex {
  int first_year = 0;
  Eigen::VectorXd values;

  std::size_t n_years() const noexcept { return static_cast<std::size_t>(values.size()); }
  int last_year() const noexcept { return first_year + static_cast<int>(n_years()) - 1; }
};

struct SyntheticFieldSpec {
  std::size_t n_cells = 1732;
  std::size_t n_years = 149;
  int first_year = 1850;
  double signal_rho = 0.0;
  double trend = 0.0;  // degC per year
  double loading_min = 1.0;
  double loading_max = 1.0;
  double local_noise_sd = 0.0;
  std::uint64_t seed = 0;

  /// Throws InvalidInput on the first violated constraint.
  void validate() const;
};

/// The synthetic field plus the latent signal it was generated from.
struct SyntheticField {
  GridField field;
  TargetIndex signal;
};

/// Number of distinct cells the 5 degree grid holds.
inline constexpr std::size_t kGridCellCount = 36 * 72;

/// Reads `<prefix>.cells.csv` and `<prefix>.data.csv`. `path` may be the
/// bundle prefix or either of the two files. Throws ParseError with the
/// offending line number.
GridField load_grid_field(const std::filesystem::path& path);

/// Writes the two-file bundle with 6 fractional digits.
void write_grid_field(const GridField& field, const std::filesystem::path& prefix);

/// Bundle prefix for a path that may name one of the bundle files.
std::filesystem::path bundle_prefix(const std::filesystem::path& path);

/// Cos-latitude weighted mean over the cells with lat > 0.
TargetIndex nh_mean_index(const GridField& field);

/// `n` distinct cell indices drawn uniformly without replacement, sorted.
std::vector<std::size_t> sample_cells(const GridField& field, std::size_t n, std::uint64_t seed);

/// Latent AR1 signal with a linear trend loaded onto every cell plus
/// independent local noise. Cells alternate between hemispheres.
SyntheticField generate_synthetic_field(const SyntheticFieldSpec& spec);

}  // namespace ppx
