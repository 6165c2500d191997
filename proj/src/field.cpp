#include "ppx/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "ppx/error.hpp"
#include "ppx/rng.hpp"

namespace ppx {

namespace {

bool on_five_degree_centre(double v) {
  const double k = (v + 2.5) / 5.0;
  return std::abs(k - std::round(k)) < 1e-9;
}

}  // namespace

bool on_grid(const CellCoord& c) noexcept {
  return c.lat >= -87.5 && c.lat <= 87.5 && c.lon >= -177.5 && c.lon <= 177.5 &&
         on_five_degree_centre(c.lat) && on_five_degree_centre(c.lon);
}

GridField::GridField(std::vector<CellCoord> cells, int first_year, Eigen::MatrixXd values)
    : cells_(std::move(cells)), first_year_(first_year), values_(std::move(values)) {
  if (cells_.empty()) throw InvalidInput("grid field has no cells");
  if (static_cast<std::size_t>(values_.cols()) != cells_.size())
    throw InvalidInput(fmt::format("value matrix has {} columns for {} cells", values_.cols(), cells_.size()));
  if (n_years() < kMinYears)
    throw InvalidInput(fmt::format("grid field needs at least {} years, got {}", kMinYears, n_years()));
  std::set<std::pair<double, double>> seen;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const auto& c = cells_[i];
    if (!on_grid(c)) throw InvalidInput(fmt::format("cell {} ({}, {}) is not a 5-degree cell centre", i, c.lat, c.lon));
    if (!seen.emplace(c.lat, c.lon).second)
      throw InvalidInput(fmt::format("duplicate cell ({}, {}) at index {}", c.lat, c.lon, i));
  }
  if (!values_.allFinite()) throw InvalidInput("grid field contains non-finite values");
}

std::vector<int> GridField::years() const {
  std::vector<int> out(n_years());
  std::iota(out.begin(), out.end(), first_year_);
  return out;
}

void SyntheticFieldSpec::validate() const {
  if (n_cells < 1) throw InvalidInput("synthetic n_cells must be >= 1");
  if (n_cells > kGridCellCount)
    throw InvalidInput(fmt::format("synthetic n_cells must be <= {} (distinct 5-degree cells)", kGridCellCount));
  if (n_years < GridField::kMinYears) throw InvalidInput("synthetic n_years must be >= 31");
  if (!(signal_rho >= 0.0 && signal_rho < 1.0)) throw InvalidInput("synthetic signal_rho must lie in [0, 1)");
  if (!(loading_min <= loading_max)) throw InvalidInput("synthetic loading_min must be <= loading_max");
  if (!(local_noise_sd >= 0.0)) throw InvalidInput("synthetic local_noise_sd must be >= 0");
  if (!std::isfinite(trend)) throw InvalidInput("synthetic trend must be finite");
}

std::filesystem::path bundle_prefix(const std::filesystem::path& path) {
  const std::string s = path.string();
  for (const std::string_view suffix : {".cells.csv", ".data.csv", ".provenance.csv"}) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
      return s.substr(0, s.size() - suffix.size());
  }
  return path;
}

GridField load_grid_field(const std::filesystem::path& path) {
  const auto prefix = bundle_prefix(path).string();
  std::string line;

  std::vector<CellCoord> cells;
  {
    detail::LineReader in(prefix + ".cells.csv");
    if (!in.next(line)) in.fail("empty file, expected header 'index,lat,lon'");
    if (detail::trim(line) != "index,lat,lon") in.fail("malformed header, expected 'index,lat,lon'");
    std::set<std::pair<double, double>> seen;
    while (in.next(line)) {
      if (detail::trim(line).empty()) continue;
      const auto parts = detail::split(line);
      if (parts.size() != 3) in.fail(fmt::format("expected 3 fields, got {}", parts.size()));
      const auto idx = detail::to_int<std::size_t>(parts[0]);
      const auto lat = detail::to_double(parts[1]);
      const auto lon = detail::to_double(parts[2]);
      if (!idx || !lat || !lon) in.fail("unparseable cell row");
      if (*idx != cells.size()) in.fail(fmt::format("cell index {} out of order, expected {}", *idx, cells.size()));
      const CellCoord c{*lat, *lon};
      if (!on_grid(c)) in.fail(fmt::format("({}, {}) is not a 5-degree cell centre", c.lat, c.lon));
      if (!seen.emplace(c.lat, c.lon).second) in.fail(fmt::format("duplicate cell ({}, {})", c.lat, c.lon));
      cells.push_back(c);
    }
    if (cells.empty()) in.fail("no cells");
  }

  const auto data = detail::read_year_matrix(prefix + ".data.csv", cells.size());
  if (data.rows < GridField::kMinYears)
    throw ParseError(prefix + ".data.csv", data.rows + 1,
                     fmt::format("field needs at least {} years, got {}", GridField::kMinYears, data.rows));
  const std::size_t rows = data.rows;
  const auto& flat = data.flat;
  const int first_year = data.first_year;

  Eigen::MatrixXd values(rows, cells.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cells.size(); ++c) values(r, c) = flat[r * cells.size() + c];
  return GridField(std::move(cells), first_year, std::move(values));
}

void write_grid_field(const GridField& field, const std::filesystem::path& prefix) {
  const auto base = bundle_prefix(prefix).string();
  {
    std::ofstream out(base + ".cells.csv");
    if (!out) throw Error("cannot write " + base + ".cells.csv");
    out << "index,lat,lon\n";
    for (std::size_t i = 0; i < field.n_cells(); ++i)
      out << fmt::format("{},{:.1f},{:.1f}\n", i, field.cells()[i].lat, field.cells()[i].lon);
  }
  std::ofstream out(base + ".data.csv");
  if (!out) throw Error("cannot write " + base + ".data.csv");
  std::string buf = "year";
  for (std::size_t i = 0; i < field.n_cells(); ++i) buf += fmt::format(",c{}", i);
  out << buf << '\n';
  const auto& v = field.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    buf = fmt::format("{}", field.first_year() + static_cast<int>(r));
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      // avoid writing "-0.000000"
      const double x = std::abs(v(r, c)) < 5e-7 ? 0.0 : v(r, c);
      buf += fmt::format(",{:.6f}", x);
    }
    out << buf << '\n';
  }
}

TargetIndex nh_mean_index(const GridField& field) {
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(field.n_cells()));
  for (std::size_t i = 0; i < field.n_cells(); ++i) {
    const auto& c = field.cells()[i];
    if (c.northern()) weights[static_cast<Eigen::Index>(i)] = std::cos(c.lat * std::numbers::pi / 180.0);
  }
  const double total = weights.sum();
  if (total <= 0.0) throw InvalidInput("field has no Northern Hemisphere cells (lat > 0)");
  weights /= total;
  return TargetIndex{field.first_year(), field.values() * weights};
}

std::vector<std::size_t> sample_cells(const GridField& field, std::size_t n, std::uint64_t seed) {
  if (n < 1 || n > field.n_cells())
    throw InvalidInput(fmt::format("cannot sample {} cells from a field of {}", n, field.n_cells()));
  std::vector<std::size_t> all(field.n_cells());
  std::iota(all.begin(), all.end(), std::size_t{0});
  // partial Fisher-Yates
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng.engine())]);
  }
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

SyntheticField generate_synthetic_field(const SyntheticFieldSpec& spec) {
  spec.validate();
  const auto n_years = static_cast<Eigen::Index>(spec.n_years);
  const auto n_cells = static_cast<Eigen::Index>(spec.n_cells);

  Eigen::VectorXd signal(n_years);
  {
    Rng rng(derive_seed(spec.seed, 0));
    double state = rng.normal() / std::sqrt(1.0 - spec.signal_rho * spec.signal_rho);
    for (Eigen::Index t = 0; t < n_years; ++t) {
      if (t > 0) state = spec.signal_rho * state + rng.normal();
      signal[t] = state + spec.trend * static_cast<double>(t);
    }
  }

  std::vector<CellCoord> cells;
  cells.reserve(spec.n_cells);
  for (std::size_t i = 0; i < spec.n_cells; ++i) {
    const std::size_t k = i / 2;
    const double lat = 2.5 + 5.0 * static_cast<double>(k / 72);
    const double lon = -177.5 + 5.0 * static_cast<double>(k % 72);
    cells.push_back({i % 2 == 0 ? lat : -lat, lon});
  }

  Eigen::MatrixXd values(n_years, n_cells);
  Rng loading_rng(derive_seed(spec.seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 0; c < n_cells; ++c) {
    const double loading = spec.loading_min + (spec.loading_max - spec.loading_min) * unit(loading_rng.engine());
    Rng noise(derive_seed(spec.seed, 2 + static_cast<std::uint64_t>(c)));
    for (Eigen::Index t = 0; t < n_years; ++t) {
      const double eps = spec.local_noise_sd > 0.0 ? spec.local_noise_sd * noise.normal() : 0.0;
      values(t, c) = loading * signal[t] + eps;
    }
  }

  return SyntheticField{GridField(std::move(cells), spec.first_year, std::move(values)),
                        TargetIndex{spec.first_year, std::move(signal)}};
}

}  // namespace ppx
