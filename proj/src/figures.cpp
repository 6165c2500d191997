#include "ppx/figures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "ppx/experiment.hpp"

namespace ppx {

namespace {

constexpr std::array<std::string_view, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                      "#9467bd", "#8c564b", "#e377c2", "#17becf"};

constexpr double kWidth = 820;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 70;

/// Rows of a CSV file keyed by header name, in file order.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name, const std::string& path) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(fmt::format("{}: missing column '{}'", path, name));
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_table(const std::filesystem::path& path) {
  detail::LineReader in(path.string());
  Table t;
  std::string line;
  if (!in.next(line)) in.fail("empty file");
  for (auto f : detail::split(line)) t.header.emplace_back(detail::trim(f));
  while (in.next(line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> row;
    for (auto f : detail::split(line)) row.emplace_back(detail::trim(f));
    if (row.size() != t.header.size()) in.fail("row length differs from header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto v = detail::to_double(s);
  if (!v) throw Error(fmt::format("unparseable number '{}'", s));
  return *v;
}

/// Round-ish tick step covering `span` with about `target` ticks.
double tick_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (const double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

struct Axes {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string svg_open(std::string_view title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, title);
}

std::string y_axis(const Axes& ax, std::string_view label) {
  std::string s = fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                              kLeft, ax.py(ax.y0), ax.py(ax.y1));
  const double step = tick_step(ax.y1 - ax.y0, 6);
  for (double v = std::ceil(ax.y0 / step) * step; v <= ax.y1 + 1e-12; v += step) {
    const double y = ax.py(v);
    s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                     kWidth - kRight, y);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:g}</text>\n", kLeft - 6, y + 4,
                     std::abs(v) < step * 1e-9 ? 0.0 : v);
  }
  s += fmt::format("<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
                   kHeight / 2, kHeight / 2, label);
  return s;
}

}  // namespace

std::string render_rmse_boxplot(const std::filesystem::path& cv_results_csv) {
  const Table t = read_table(cv_results_csv);
  const auto c_ds = t.column("dataset", cv_results_csv.string());
  const auto c_rmse = t.column("rmse", cv_results_csv.string());

  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& row : t.rows) {
    if (!values.count(row[c_ds])) order.push_back(row[c_ds]);
    const double v = parse_number(row[c_rmse]);
    auto& bucket = values[row[c_ds]];
    if (std::isfinite(v)) bucket.push_back(v);
  }

  double top = 0.0;
  for (const auto& [k, v] : values)
    for (double x : v) top = std::max(top, x);
  if (!(top > 0.0)) top = 1.0;
  const Axes ax{0.0, static_cast<double>(std::max<std::size_t>(order.size(), 1)), 0.0, top * 1.08};

  std::string s = svg_open("Cross-validated RMSE on holdout blocks");
  s += y_axis(ax, "RMSE (°C)");
  s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", kLeft,
                   ax.py(0), kWidth - kRight, ax.py(0));
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto v = values[order[i]];
    const double cx = ax.px(static_cast<double>(i) + 0.5);
    const double half = (ax.px(1) - ax.px(0)) * 0.3;
    const auto colour = kPalette[i % kPalette.size()];
    s += fmt::format("<g class=\"box\" data-dataset=\"{}\">\n", order[i]);
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      const double q1 = quantile_sorted(v, 0.25);
      const double med = quantile_sorted(v, 0.5);
      const double q3 = quantile_sorted(v, 0.75);
      s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", cx,
                       ax.py(v.front()), ax.py(v.back()));
      s += fmt::format(
          "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\" fill-opacity=\"0.6\" "
          "stroke=\"black\"/>\n",
          cx - half, ax.py(q3), 2 * half, std::max(ax.py(q1) - ax.py(q3), 0.5), colour);
      s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\" stroke-width=\"2\"/>\n",
                       cx - half, ax.py(med), cx + half, ax.py(med));
    }
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", cx,
                     kHeight - kBottom + 20, order[i]);
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string render_cps_overlay(const std::filesystem::path& cps_csv, const std::filesystem::path& cps_skill_csv) {
  const Table t = read_table(cps_csv);
  const auto c_ds = t.column("dataset", cps_csv.string());
  const auto c_year = t.column("year", cps_csv.string());
  const auto c_target = t.column("target", cps_csv.string());
  const auto c_rec = t.column("reconstruction", cps_csv.string());
  const Table skill = read_table(cps_skill_csv);
  const auto s_ds = skill.column("dataset", cps_skill_csv.string());
  const auto s_corr = skill.column("correlation", cps_skill_csv.string());

  std::map<std::string, std::string> corr;
  for (const auto& row : skill.rows) corr[row[s_ds]] = row[s_corr];

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::map<double, double> target;
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -y_lo;
  for (const auto& row : t.rows) {
    const double year = parse_number(row[c_year]);
    const double tv = parse_number(row[c_target]);
    const double rv = parse_number(row[c_rec]);
    if (!series.count(row[c_ds])) order.push_back(row[c_ds]);
    series[row[c_ds]].emplace_back(year, rv);
    target[year] = tv;
    y_lo = std::min({y_lo, tv, rv});
    y_hi = std::max({y_hi, tv, rv});
  }
  if (target.empty()) {
    y_lo = 0.0;
    y_hi = 1.0;
    target[0.0] = 0.0;
    target[1.0] = 0.0;
  }
  const double pad = 0.05 * std::max(y_hi - y_lo, 1e-9);
  const double x0 = target.begin()->first;
  const double x1 = std::max(target.rbegin()->first, x0 + 1.0);
  const Axes ax{x0, x1, y_lo - pad, y_hi + pad};

  std::string s = svg_open("Area-weighted CPS reconstructions vs target");
  s += y_axis(ax, "Temperature anomaly (°C)");
  s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", kLeft,
                   ax.py(ax.y0), kWidth - kRight, ax.py(ax.y0));
  const double xstep = tick_step(x1 - x0, 8);
  for (double v = std::ceil(x0 / xstep) * xstep; v <= x1 + 1e-9; v += xstep)
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:g}</text>\n", ax.px(v),
                     ax.py(ax.y0) + 18, v);

  const auto polyline = [&](const auto& points, std::string_view colour, double width, std::string_view name) {
    std::string pts;
    for (const auto& [x, y] : points) {
      if (!std::isfinite(y)) continue;
      pts += fmt::format("{:.1f},{:.1f} ", ax.px(x), ax.py(y));
    }
    return fmt::format("<polyline data-series=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" points=\"{}\"/>\n",
                       name, colour, width, pts);
  };
  s += polyline(target, "black", 2.0, "target");
  for (std::size_t i = 0; i < order.size(); ++i)
    s += polyline(series[order[i]], kPalette[i % kPalette.size()], 1.2, order[i]);

  double ly = kTop + 10;
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">target</text>\n", kLeft + 30, ly + 4);
  s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\" stroke-width=\"2\"/>\n",
                   kLeft + 8, ly, kLeft + 26, ly);
  for (std::size_t i = 0; i < order.size(); ++i) {
    ly += 16;
    const auto it = corr.find(order[i]);
    const std::string r = it == corr.end() ? "n/a" : it->second;
    s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                     kLeft + 8, ly, kLeft + 26, ly, kPalette[i % kPalette.size()]);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{} (r = {})</text>\n", kLeft + 30, ly + 4, order[i], r);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace ppx
