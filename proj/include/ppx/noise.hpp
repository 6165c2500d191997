#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ppx/field.hpp"
#include "ppx/rng.hpp"

namespace ppx {

enum class NoiseKind { none, white, ar1 };

/// Additive corruption recipe. `noise_fraction` is the share of the total
/// pseudoproxy variance contributed by the noise.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double noise_fraction = 0.0;
  double rho = 0.0;

  void validate() const;
};

enum class NullKind { ar1_emp, brownian };

struct NullModelSpec {
  NullKind kind = NullKind::ar1_emp;
  std::size_t n_series = 0;

  void validate() const;
};

std::string_view to_string(NoiseKind kind) noexcept;
std::string_view to_string(NullKind kind) noexcept;
std::optional<NoiseKind> parse_noise_kind(std::string_view s) noexcept;
std::optional<NullKind> parse_null_kind(std::string_view s) noexcept;

/// Where one predictor series came from.
struct Provenance {
  std::optional<std::size_t> source_cell;  // empty for null-model series
  std::optional<NullKind> null_kind;
  NoiseSpec noise;
  double rho = 0.0;  // AR1 coefficient actually used (spec rho, or the fitted one for ar1_emp)
  std::uint64_t seed = 0;
};

/// Predictor matrix [n_years x n_series] with per-series provenance.
struct PseudoproxyNetwork {
  int first_year = 0;
  Eigen::MatrixXd series;
  std::vector<Provenance> provenance;
  std::vector<std::optional<CellCoord>> coords;  // source cell location, if any

  std::size_t n_years() const noexcept { return static_cast<std::size_t>(series.rows()); }
  std::size_t n_series() const noexcept { return static_cast<std::size_t>(series.cols()); }
};

struct Ar1Fit {
  double rho = 0.0;
  double sigma = 0.0;  // sample sd, divisor n-1
};

/// sigma_n such that noise contributes fraction f of sigma_s^2 + sigma_n^2.
double noise_sd_for_fraction(double signal_sd, double f);

/// Sample standard deviation (divisor n-1).
double sample_sd(std::span<const double> x);

/// Lag-1 autocorrelation (mean removed, divisor n) clamped to [0, 0.999] and
/// sample sd. Throws on fewer than 3 points or a constant series.
Ar1Fit fit_ar1(std::span<const double> x);

/// Stationary AR1(rho) draw of length n with marginal sd `sd`.
Eigen::VectorXd ar1_series(std::size_t n, double rho, double sd, Rng& rng);

/// Adds noise per `spec`, calibrated to the series' own sample sd.
Eigen::VectorXd corrupt_series(std::span<const double> series, const NoiseSpec& spec, std::uint64_t seed);

/// One pseudoproxy per selected cell; series k uses substream k of `master_seed`.
PseudoproxyNetwork build_network(const GridField& field, std::span<const std::size_t> cell_indices,
                                 const NoiseSpec& spec, std::uint64_t master_seed, Exec exec = Exec::parallel);

/// Information-free predictors. `brownian` ignores the template's values and
/// uses only its length; `ar1_emp` emits, for series k, a surrogate matched to
/// template column k mod n_columns.
PseudoproxyNetwork build_null_network(const Eigen::MatrixXd& template_series, int first_year,
                                      const NullModelSpec& spec, std::uint64_t seed,
                                      Exec exec = Exec::parallel);

/// The selected field columns as a noise-free template.
Eigen::MatrixXd select_columns(const GridField& field, std::span<const std::size_t> cell_indices);

/// Writes `<prefix>.cells.csv`, `<prefix>.data.csv` and `<prefix>.provenance.csv`.
/// Null-model series leave lat/lon empty.
void write_network(const PseudoproxyNetwork& network, const std::filesystem::path& prefix);
PseudoproxyNetwork load_network(const std::filesystem::path& prefix);

}  // namespace ppx
