#include "ppx/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "ppx/error.hpp"

namespace ppx {

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

using Entries = std::map<std::string, Entry>;

/// Splits the text into key/value entries; syntax problems become violations.
Entries tokenize(std::string_view text, std::vector<Violation>& violations) {
  Entries entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      violations.push_back({line_no, "", fmt::format("syntax error: expected 'key = value', got '{}'", line)});
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) {
      violations.push_back({line_no, "", "syntax error: empty key"});
      continue;
    }
    if (const auto it = entries.find(key); it != entries.end()) {
      violations.push_back({line_no, key, fmt::format("duplicate key (first set on line {})", it->second.line)});
      continue;
    }
    entries.emplace(key, Entry{value, line_no});
  }
  return entries;
}

/// Typed reads from the entry map; each consumed key is remembered so that
/// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const Entries& entries, std::vector<Violation>& violations) : entries_(entries), violations_(violations) {}

  template <typename T>
  void read(const std::string& key, T& target) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return;
    used_.insert(key);
    const auto& [value, line] = it->second;
    if constexpr (std::is_same_v<T, double>) {
      const auto v = detail::to_double(value);
      if (!v || !std::isfinite(*v)) return bad(key, line, "expected a finite number");
      target = *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (value == "true") target = true;
      else if (value == "false") target = false;
      else bad(key, line, "expected 'true' or 'false'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      target = value;
    } else if constexpr (std::is_same_v<T, int>) {
      const auto v = detail::to_int<int>(value);
      if (!v) return bad(key, line, "expected an integer");
      target = *v;
    } else {
      const auto v = detail::to_int<T>(value);
      if (!v) return bad(key, line, "expected a non-negative integer");
      target = *v;
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::size_t line_of(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }
  void mark_used(const std::string& key) { used_.insert(key); }

  /// Highest list index N seen for keys `<prefix>.N.<field>`, plus one.
  std::size_t list_size(const std::string& prefix) {
    std::size_t size = 0;
    for (const auto& [key, entry] : entries_) {
      if (key.rfind(prefix + ".", 0) != 0) continue;
      const std::string rest = key.substr(prefix.size() + 1);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) continue;
      if (const auto idx = detail::to_int<std::size_t>(rest.substr(0, dot))) size = std::max(size, *idx + 1);
    }
    return size;
  }

  void ignore_outside(const std::string& prefix) {
    for (const auto& [key, entry] : entries_)
      if (key.rfind(prefix, 0) != 0) used_.insert(key);
  }

  void report_unknown() {
    for (const auto& [key, entry] : entries_)
      if (!used_.count(key)) violations_.push_back({entry.line, key, "unknown key"});
  }

 private:
  void bad(const std::string& key, std::size_t line, const std::string& what) {
    violations_.push_back({line, key, what});
  }

  const Entries& entries_;
  std::vector<Violation>& violations_;
  std::set<std::string> used_;
};

void read_synthetic(Reader& r, SyntheticFieldSpec& s) {
  r.read("synthetic.n_cells", s.n_cells);
  r.read("synthetic.n_years", s.n_years);
  r.read("synthetic.first_year", s.first_year);
  r.read("synthetic.signal_rho", s.signal_rho);
  r.read("synthetic.trend", s.trend);
  r.read("synthetic.loading_min", s.loading_min);
  r.read("synthetic.loading_max", s.loading_max);
  r.read("synthetic.local_noise_sd", s.local_noise_sd);
  r.read("synthetic.seed", s.seed);
}

void check_synthetic(const SyntheticFieldSpec& s, const Reader* r, std::vector<Violation>& out) {
  const auto add = [&](const std::string& key, const std::string& msg) {
    out.push_back({r ? r->line_of(key) : 0, key, msg});
  };
  if (s.n_cells < 1) add("synthetic.n_cells", "n_cells must be >= 1");
  if (s.n_cells > kGridCellCount) add("synthetic.n_cells", fmt::format("n_cells must be <= {}", kGridCellCount));
  if (s.n_years < GridField::kMinYears) add("synthetic.n_years", "n_years must be >= 31");
  if (!(s.signal_rho >= 0.0 && s.signal_rho < 1.0)) add("synthetic.signal_rho", "signal_rho must lie in [0, 1)");
  if (!(s.loading_min <= s.loading_max)) add("synthetic.loading_min", "loading_min must be <= loading_max");
  if (!(s.local_noise_sd >= 0.0)) add("synthetic.local_noise_sd", "local_noise_sd must be >= 0");
}

bool valid_label(const std::string& label) {
  return !label.empty() && label.find_first_of(",\"\n\r<>&") == std::string::npos;
}

}  // namespace

SyntheticFieldSpec ExperimentConfig::default_synthetic() {
  SyntheticFieldSpec s;
  s.n_cells = 1732;
  s.n_years = 149;
  s.first_year = 1850;
  s.signal_rho = 0.99;
  s.trend = 0.02;
  s.loading_min = 0.5;
  s.loading_max = 1.5;
  s.local_noise_sd = 14.0;
  s.seed = 1732;
  return s;
}

std::vector<NoiseDataset> ExperimentConfig::default_noise_levels() {
  return {
      {"none", {NoiseKind::none, 0.0, 0.0}},
      {"white50", {NoiseKind::white, 0.5, 0.0}},
      {"white80", {NoiseKind::white, 0.8, 0.0}},
      {"white94", {NoiseKind::white, 0.94, 0.0}},
      {"red86", {NoiseKind::ar1, 0.86, 0.32}},
  };
}

std::vector<NullDataset> ExperimentConfig::default_null_models(std::size_t n_series) {
  return {
      {"ar1_emp", {NullKind::ar1_emp, n_series}},
      {"brownian", {NullKind::brownian, n_series}},
  };
}

YearWindow ExperimentConfig::resolved_calibration_window(int first_year, std::size_t n_years) const {
  if (calibration_window) return *calibration_window;
  if (field_path) return YearWindow{1961, 1990};
  const int last = first_year + static_cast<int>(n_years) - 1;
  return YearWindow{last - 29, last};
}

std::string Violation::to_string() const {
  std::string out;
  if (line > 0) out += fmt::format("line {}: ", line);
  if (!key.empty()) out += key + ": ";
  return out + message;
}

std::string default_label(const NoiseSpec& noise) {
  const auto pct = static_cast<long>(std::lround(noise.noise_fraction * 100.0));
  switch (noise.kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::white: return fmt::format("white{}", pct);
    case NoiseKind::ar1: return fmt::format("red{}", pct);
  }
  return "dataset";
}

ConfigParse parse_config(std::string_view text) {
  ConfigParse result;
  auto& cfg = result.config;
  auto& violations = result.violations;
  const Entries entries = tokenize(text, violations);
  Reader r(entries, violations);

  std::string source = "synthetic";
  r.read("field.source", source);
  if (source != "synthetic") cfg.field_path = source;
  read_synthetic(r, cfg.synthetic);
  r.read("n_cells", cfg.n_cells);

  if (const std::size_t n = r.list_size("noise"); n > 0) {
    cfg.noise_levels.assign(n, NoiseDataset{});
    for (std::size_t i = 0; i < n; ++i) {
      const std::string p = fmt::format("noise.{}.", i);
      auto& d = cfg.noise_levels[i];
      if (!r.has(p + "kind")) violations.push_back({0, p + "kind", "missing (noise list entries must be contiguous from 0)"});
      std::string kind = "none";
      r.read(p + "kind", kind);
      if (const auto k = parse_noise_kind(kind)) d.noise.kind = *k;
      else violations.push_back({r.line_of(p + "kind"), p + "kind", fmt::format("unknown noise kind '{}'", kind)});
      r.read(p + "noise_fraction", d.noise.noise_fraction);
      r.read(p + "rho", d.noise.rho);
      d.label = default_label(d.noise);
      r.read(p + "label", d.label);
    }
  }

  std::vector<bool> null_series_set;
  if (const std::size_t n = r.list_size("null"); n > 0) {
    cfg.null_models.assign(n, NullDataset{});
    null_series_set.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string p = fmt::format("null.{}.", i);
      auto& d = cfg.null_models[i];
      if (!r.has(p + "kind")) violations.push_back({0, p + "kind", "missing (null list entries must be contiguous from 0)"});
      std::string kind = "ar1_emp";
      r.read(p + "kind", kind);
      if (const auto k = parse_null_kind(kind)) d.spec.kind = *k;
      else violations.push_back({r.line_of(p + "kind"), p + "kind", fmt::format("unknown null model kind '{}'", kind)});
      null_series_set[i] = r.has(p + "n_series");
      r.read(p + "n_series", d.spec.n_series);
      d.label = std::string(to_string(d.spec.kind));
      r.read(p + "label", d.label);
    }
  } else {
    null_series_set.assign(cfg.null_models.size(), false);
  }
  for (std::size_t i = 0; i < cfg.null_models.size(); ++i)
    if (!null_series_set[i]) cfg.null_models[i].spec.n_series = cfg.n_cells;
  r.read("null.draws", cfg.null_draws);

  r.read("block_length", cfg.block_length);
  if (r.has("calibration.first") || r.has("calibration.last")) {
    YearWindow w{0, 0};
    if (!r.has("calibration.first") || !r.has("calibration.last"))
      violations.push_back({0, "calibration", "calibration.first and calibration.last must be set together"});
    r.read("calibration.first", w.first);
    r.read("calibration.last", w.last);
    cfg.calibration_window = w;
  }

  r.read("lasso.n_lambda", cfg.lasso.n_lambda);
  r.read("lasso.lambda_min_ratio", cfg.lasso.lambda_min_ratio);
  r.read("lasso.cv_folds", cfg.lasso.cv_folds);
  r.read("lasso.max_iter", cfg.lasso.max_iter);
  r.read("lasso.tol", cfg.lasso.tol);
  r.read("master_seed", cfg.master_seed);
  std::string out_dir = cfg.output_dir.string();
  r.read("output_dir", out_dir);
  cfg.output_dir = out_dir;
  r.read("write_networks", cfg.write_networks);
  r.read("parallel", cfg.parallel);
  r.report_unknown();

  for (auto v : validate_config(cfg)) {
    v.line = r.line_of(v.key);
    violations.push_back(std::move(v));
  }
  return result;
}

ConfigParse load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::vector<Violation> validate_config(const ExperimentConfig& c) {
  std::vector<Violation> out;
  const auto add = [&](std::string key, std::string msg) { out.push_back({0, std::move(key), std::move(msg)}); };

  if (!c.field_path) {
    check_synthetic(c.synthetic, nullptr, out);
    if (c.n_cells > c.synthetic.n_cells)
      add("n_cells", fmt::format("n_cells ({}) exceeds synthetic.n_cells ({})", c.n_cells, c.synthetic.n_cells));
  } else if (c.field_path->empty()) {
    add("field.source", "field path is empty");
  }
  if (c.n_cells < 1) add("n_cells", "n_cells must be >= 1");

  std::set<std::string> labels;
  const auto check_label = [&](const std::string& key, const std::string& label) {
    if (!valid_label(label)) add(key, fmt::format("label '{}' is empty or contains reserved characters", label));
    else if (!labels.insert(label).second) add(key, fmt::format("duplicate dataset label '{}'", label));
  };
  if (c.noise_levels.empty()) add("noise", "at least one noise level is required");
  for (std::size_t i = 0; i < c.noise_levels.size(); ++i) {
    const std::string p = fmt::format("noise.{}.", i);
    const auto& n = c.noise_levels[i].noise;
    if (!(n.noise_fraction < 1.0)) add(p + "noise_fraction", "noise_fraction must be < 1");
    else if (!(n.noise_fraction >= 0.0)) add(p + "noise_fraction", "noise_fraction must be >= 0");
    if (!(n.rho >= 0.0 && n.rho < 1.0)) add(p + "rho", "rho must lie in [0, 1)");
    if (n.kind == NoiseKind::none && n.noise_fraction != 0.0)
      add(p + "noise_fraction", "noise kind 'none' requires noise_fraction = 0");
    check_label(p + "label", c.noise_levels[i].label);
  }
  for (std::size_t i = 0; i < c.null_models.size(); ++i) {
    const std::string p = fmt::format("null.{}.", i);
    if (c.null_models[i].spec.n_series < 1) add(p + "n_series", "n_series must be >= 1");
    check_label(p + "label", c.null_models[i].label);
  }
  if (c.null_draws < 1) add("null.draws", "null.draws must be >= 1");

  if (c.block_length < 2) add("block_length", "block_length must be >= 2");
  if (!c.field_path && c.block_length >= 2) {
    const auto n_years = c.synthetic.n_years;
    if (n_years < static_cast<std::size_t>(c.block_length) + 1) {
      add("block_length", fmt::format("block_length {} leaves no training years in a {}-year field", c.block_length, n_years));
    } else if (n_years - static_cast<std::size_t>(c.block_length) < 2 * c.lasso.cv_folds) {
      add("lasso.cv_folds", fmt::format("{} training years cannot fill {} folds of at least 2",
                                        n_years - static_cast<std::size_t>(c.block_length), c.lasso.cv_folds));
    }
  }
  if (c.calibration_window) {
    const auto& w = *c.calibration_window;
    if (w.last - w.first < 1) add("calibration.first", "calibration window must span at least 2 years");
    if (!c.field_path) {
      const int last = c.synthetic.first_year + static_cast<int>(c.synthetic.n_years) - 1;
      if (w.first < c.synthetic.first_year || w.last > last)
        add("calibration.first", fmt::format("calibration window {}-{} lies outside {}-{}", w.first, w.last,
                                             c.synthetic.first_year, last));
    }
  }

  if (c.lasso.n_lambda < 1) add("lasso.n_lambda", "n_lambda must be >= 1");
  if (!(c.lasso.lambda_min_ratio > 0.0 && c.lasso.lambda_min_ratio < 1.0))
    add("lasso.lambda_min_ratio", "lambda_min_ratio must lie in (0, 1)");
  if (c.lasso.cv_folds < 2) add("lasso.cv_folds", "cv_folds must be >= 2");
  if (c.lasso.max_iter < 1) add("lasso.max_iter", "max_iter must be >= 1");
  if (!(c.lasso.tol > 0.0)) add("lasso.tol", "tol must be > 0");
  if (c.output_dir.empty()) add("output_dir", "output_dir must not be empty");
  return out;
}

std::string to_text(const ExperimentConfig& c) {
  std::string s;
  const auto kv = [&](std::string_view key, const auto& value) { s += fmt::format("{} = {}\n", key, value); };
  kv("field.source", c.field_path ? c.field_path->string() : std::string("synthetic"));
  kv("synthetic.n_cells", c.synthetic.n_cells);
  kv("synthetic.n_years", c.synthetic.n_years);
  kv("synthetic.first_year", c.synthetic.first_year);
  kv("synthetic.signal_rho", c.synthetic.signal_rho);
  kv("synthetic.trend", c.synthetic.trend);
  kv("synthetic.loading_min", c.synthetic.loading_min);
  kv("synthetic.loading_max", c.synthetic.loading_max);
  kv("synthetic.local_noise_sd", c.synthetic.local_noise_sd);
  kv("synthetic.seed", c.synthetic.seed);
  kv("n_cells", c.n_cells);
  for (std::size_t i = 0; i < c.noise_levels.size(); ++i) {
    const auto& d = c.noise_levels[i];
    kv(fmt::format("noise.{}.label", i), d.label);
    kv(fmt::format("noise.{}.kind", i), to_string(d.noise.kind));
    kv(fmt::format("noise.{}.noise_fraction", i), d.noise.noise_fraction);
    kv(fmt::format("noise.{}.rho", i), d.noise.rho);
  }
  for (std::size_t i = 0; i < c.null_models.size(); ++i) {
    const auto& d = c.null_models[i];
    kv(fmt::format("null.{}.label", i), d.label);
    kv(fmt::format("null.{}.kind", i), to_string(d.spec.kind));
    kv(fmt::format("null.{}.n_series", i), d.spec.n_series);
  }
  kv("null.draws", c.null_draws);
  kv("block_length", c.block_length);
  if (c.calibration_window) {
    kv("calibration.first", c.calibration_window->first);
    kv("calibration.last", c.calibration_window->last);
  }
  kv("lasso.n_lambda", c.lasso.n_lambda);
  kv("lasso.lambda_min_ratio", c.lasso.lambda_min_ratio);
  kv("lasso.cv_folds", c.lasso.cv_folds);
  kv("lasso.max_iter", c.lasso.max_iter);
  kv("lasso.tol", c.lasso.tol);
  kv("master_seed", c.master_seed);
  kv("output_dir", c.output_dir.string());
  kv("write_networks", c.write_networks ? "true" : "false");
  kv("parallel", c.parallel ? "true" : "false");
  return s;
}

SyntheticParse parse_synthetic_spec(std::string_view text) {
  SyntheticParse result;
  result.spec = ExperimentConfig::default_synthetic();
  const Entries entries = tokenize(text, result.violations);
  Reader r(entries, result.violations);
  read_synthetic(r, result.spec);
  r.ignore_outside("synthetic.");
  r.report_unknown();
  check_synthetic(result.spec, &r, result.violations);
  return result;
}

}  // namespace ppx
