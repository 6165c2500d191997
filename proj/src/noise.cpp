#include "ppx/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "parallel.hpp"
#include "ppx/error.hpp"

namespace ppx {

void NoiseSpec::validate() const {
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw InvalidInput("noise_fraction must be < 1 and >= 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("rho must lie in [0, 1)");
  if (kind == NoiseKind::none && noise_fraction != 0.0) throw InvalidInput("noise kind 'none' requires noise_fraction = 0");
}

void NullModelSpec::validate() const {
  if (n_series < 1) throw InvalidInput("null model n_series must be >= 1");
}

std::string_view to_string(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::white: return "white";
    case NoiseKind::ar1: return "ar1";
  }
  return "?";
}

std::string_view to_string(NullKind kind) noexcept {
  switch (kind) {
    case NullKind::ar1_emp: return "ar1_emp";
    case NullKind::brownian: return "brownian";
  }
  return "?";
}

std::optional<NoiseKind> parse_noise_kind(std::string_view s) noexcept {
  if (s == "none") return NoiseKind::none;
  if (s == "white") return NoiseKind::white;
  if (s == "ar1") return NoiseKind::ar1;
  return std::nullopt;
}

std::optional<NullKind> parse_null_kind(std::string_view s) noexcept {
  if (s == "ar1_emp") return NullKind::ar1_emp;
  if (s == "brownian") return NullKind::brownian;
  return std::nullopt;
}

double noise_sd_for_fraction(double signal_sd, double f) {
  if (!(f >= 0.0 && f < 1.0)) throw InvalidInput(fmt::format("noise fraction {} outside [0, 1)", f));
  if (!(signal_sd >= 0.0)) throw InvalidInput("signal sd must be >= 0");
  return signal_sd * std::sqrt(f / (1.0 - f));
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw InvalidInput("sample sd needs at least 2 values");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

Ar1Fit fit_ar1(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 3) throw InvalidInput("AR1 fit needs at least 3 values");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  double c1 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = x[t] - mean;
    c0 += d * d;
    if (t + 1 < n) c1 += d * (x[t + 1] - mean);
  }
  if (!(c0 > 0.0)) throw InvalidInput("AR1 fit on a zero-variance series");
  return Ar1Fit{std::clamp(c1 / c0, 0.0, 0.999), std::sqrt(c0 / static_cast<double>(n - 1))};
}

Eigen::VectorXd ar1_series(std::size_t n, double rho, double sd, Rng& rng) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  if (n == 0) return out;
  const double innovation_sd = sd * std::sqrt(1.0 - rho * rho);
  out[0] = sd * rng.normal();
  for (Eigen::Index t = 1; t < out.size(); ++t) out[t] = rho * out[t - 1] + innovation_sd * rng.normal();
  return out;
}

Eigen::VectorXd corrupt_series(std::span<const double> series, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (series.size() < 2) throw InvalidInput("series needs at least 2 values to calibrate noise");
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(series.data(), static_cast<Eigen::Index>(series.size()));
  if (spec.kind == NoiseKind::none) return out;

  const double sigma = noise_sd_for_fraction(sample_sd(series), spec.noise_fraction);
  Rng rng(seed);
  if (spec.kind == NoiseKind::white) {
    for (Eigen::Index t = 0; t < out.size(); ++t) out[t] += sigma * rng.normal();
  } else {
    out += ar1_series(series.size(), spec.rho, sigma, rng);
  }
  return out;
}

Eigen::MatrixXd select_columns(const GridField& field, std::span<const std::size_t> cell_indices) {
  Eigen::MatrixXd out(field.values().rows(), static_cast<Eigen::Index>(cell_indices.size()));
  for (std::size_t k = 0; k < cell_indices.size(); ++k) {
    if (cell_indices[k] >= field.n_cells())
      throw InvalidInput(fmt::format("cell index {} out of range ({} cells)", cell_indices[k], field.n_cells()));
    out.col(static_cast<Eigen::Index>(k)) = field.values().col(static_cast<Eigen::Index>(cell_indices[k]));
  }
  return out;
}

PseudoproxyNetwork build_network(const GridField& field, std::span<const std::size_t> cell_indices,
                                 const NoiseSpec& spec, std::uint64_t master_seed, Exec exec) {
  spec.validate();
  PseudoproxyNetwork net;
  net.first_year = field.first_year();
  net.series = select_columns(field, cell_indices);
  net.provenance.resize(cell_indices.size());
  net.coords.resize(cell_indices.size());

  detail::for_each_index(cell_indices.size(), exec, [&](std::size_t k) {
    const auto col = static_cast<Eigen::Index>(k);
    const std::uint64_t seed = derive_seed(master_seed, k);
    const Eigen::VectorXd clean = net.series.col(col);
    net.series.col(col) = corrupt_series({clean.data(), static_cast<std::size_t>(clean.size())}, spec, seed);
    net.provenance[k] = Provenance{cell_indices[k], std::nullopt, spec, spec.rho, seed};
    net.coords[k] = field.cells()[cell_indices[k]];
  });
  return net;
}

PseudoproxyNetwork build_null_network(const Eigen::MatrixXd& template_series, int first_year,
                                      const NullModelSpec& spec, std::uint64_t seed, Exec exec) {
  spec.validate();
  if (template_series.rows() < 3) throw InvalidInput("null model template needs at least 3 time steps");
  if (spec.kind == NullKind::ar1_emp && template_series.cols() < 1)
    throw InvalidInput("ar1_emp null model needs at least one template series");

  const auto n_years = static_cast<std::size_t>(template_series.rows());
  PseudoproxyNetwork net;
  net.first_year = first_year;
  net.series.resize(template_series.rows(), static_cast<Eigen::Index>(spec.n_series));
  net.provenance.resize(spec.n_series);
  net.coords.assign(spec.n_series, std::nullopt);

  detail::for_each_index(spec.n_series, exec, [&](std::size_t k) {
    const std::uint64_t series_seed = derive_seed(seed, k);
    Rng rng(series_seed);
    const auto col = static_cast<Eigen::Index>(k);
    double rho = 1.0;
    if (spec.kind == NullKind::brownian) {
      double walk = 0.0;
      for (std::size_t t = 0; t < n_years; ++t) {
        walk += rng.normal();
        net.series(static_cast<Eigen::Index>(t), col) = walk;
      }
    } else {
      const Eigen::VectorXd tmpl = template_series.col(col % template_series.cols());
      const auto fit = fit_ar1({tmpl.data(), n_years});
      net.series.col(col) = ar1_series(n_years, fit.rho, fit.sigma, rng);
      rho = fit.rho;
    }
    net.provenance[k] = Provenance{std::nullopt, spec.kind, NoiseSpec{}, rho, series_seed};
  });
  return net;
}

void write_network(const PseudoproxyNetwork& network, const std::filesystem::path& prefix) {
  const auto base = bundle_prefix(prefix).string();
  const std::size_t n = network.n_series();
  if (network.provenance.size() != n || network.coords.size() != n)
    throw InvalidInput("network provenance/coords length differs from series count");
  {
    std::ofstream out(base + ".cells.csv");
    if (!out) throw Error("cannot write " + base + ".cells.csv");
    out << "index,lat,lon\n";
    for (std::size_t i = 0; i < n; ++i) {
      if (network.coords[i])
        out << fmt::format("{},{:.1f},{:.1f}\n", i, network.coords[i]->lat, network.coords[i]->lon);
      else
        out << fmt::format("{},,\n", i);
    }
  }
  {
    std::ofstream out(base + ".data.csv");
    if (!out) throw Error("cannot write " + base + ".data.csv");
    std::string buf = "year";
    for (std::size_t i = 0; i < n; ++i) buf += fmt::format(",s{}", i);
    out << buf << '\n';
    for (Eigen::Index r = 0; r < network.series.rows(); ++r) {
      buf = fmt::format("{}", network.first_year + static_cast<int>(r));
      for (Eigen::Index c = 0; c < network.series.cols(); ++c) {
        const double x = network.series(r, c);
        buf += fmt::format(",{:.6f}", std::abs(x) < 5e-7 ? 0.0 : x);
      }
      out << buf << '\n';
    }
  }
  std::ofstream out(base + ".provenance.csv");
  if (!out) throw Error("cannot write " + base + ".provenance.csv");
  out << "index,source,kind,noise_fraction,rho,seed\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = network.provenance[i];
    const std::string source = p.source_cell ? std::to_string(*p.source_cell) : std::string(to_string(*p.null_kind));
    const std::string_view kind = p.null_kind ? to_string(*p.null_kind) : to_string(p.noise.kind);
    out << fmt::format("{},{},{},{},{},{}\n", i, source, kind, p.noise.noise_fraction, p.rho, p.seed);
  }
}

PseudoproxyNetwork load_network(const std::filesystem::path& prefix) {
  const auto base = bundle_prefix(prefix).string();
  std::string line;
  PseudoproxyNetwork net;
  {
    detail::LineReader in(base + ".cells.csv");
    if (!in.next(line) || detail::trim(line) != "index,lat,lon") in.fail("malformed header, expected 'index,lat,lon'");
    while (in.next(line)) {
      if (detail::trim(line).empty()) continue;
      const auto parts = detail::split(line);
      if (parts.size() != 3) in.fail(fmt::format("expected 3 fields, got {}", parts.size()));
      const auto idx = detail::to_int<std::size_t>(parts[0]);
      if (!idx || *idx != net.coords.size()) in.fail("cell index missing or out of order");
      if (detail::trim(parts[1]).empty() && detail::trim(parts[2]).empty()) {
        net.coords.emplace_back();
        continue;
      }
      const auto lat = detail::to_double(parts[1]);
      const auto lon = detail::to_double(parts[2]);
      if (!lat || !lon || !on_grid({*lat, *lon})) in.fail("invalid cell coordinates");
      net.coords.emplace_back(CellCoord{*lat, *lon});
    }
  }
  const std::size_t n = net.coords.size();
  const auto data = detail::read_year_matrix(base + ".data.csv", n);
  net.first_year = data.first_year;
  net.series.resize(static_cast<Eigen::Index>(data.rows), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < n; ++c)
      net.series(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data.flat[r * n + c];

  detail::LineReader in(base + ".provenance.csv");
  if (!in.next(line) || detail::trim(line) != "index,source,kind,noise_fraction,rho,seed")
    in.fail("malformed header, expected 'index,source,kind,noise_fraction,rho,seed'");
  while (in.next(line)) {
    if (detail::trim(line).empty()) continue;
    const auto parts = detail::split(line);
    if (parts.size() != 6) in.fail(fmt::format("expected 6 fields, got {}", parts.size()));
    const auto idx = detail::to_int<std::size_t>(parts[0]);
    if (!idx || *idx != net.provenance.size()) in.fail("provenance index missing or out of order");
    Provenance p;
    const auto kind = detail::trim(parts[2]);
    if (const auto nk = parse_null_kind(kind)) {
      p.null_kind = nk;
    } else if (const auto k = parse_noise_kind(kind)) {
      p.noise.kind = *k;
      const auto cell = detail::to_int<std::size_t>(parts[1]);
      if (!cell) in.fail("source cell index unparseable");
      p.source_cell = cell;
    } else {
      in.fail(fmt::format("unknown kind '{}'", kind));
    }
    const auto f = detail::to_double(parts[3]);
    const auto rho = detail::to_double(parts[4]);
    const auto seed = detail::to_int<std::uint64_t>(parts[5]);
    if (!f || !rho || !seed) in.fail("unparseable provenance values");
    p.noise.noise_fraction = *f;
    p.rho = *rho;
    if (p.noise.kind == NoiseKind::ar1) p.noise.rho = *rho;
    p.seed = *seed;
    net.provenance.push_back(p);
  }
  if (net.provenance.size() != n) in.fail("provenance row count differs from series count");
  return net;
}

}  // namespace ppx
