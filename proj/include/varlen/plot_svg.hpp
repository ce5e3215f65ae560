#pragma once

// Minimal SVG charts for grid aggregates and GA curves.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "varlen/experiments.hpp"

namespace varlen::plot {

namespace fs = std::filesystem;

enum class Style { kLine, kErrorBars, kBand };

struct Series {
  std::string label;
  Style style = Style::kLine;
  std::vector<double> x, y, lo, hi;  // lo/hi used by error bars and bands
};

struct Chart {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o.push_back(c);
  }
  return o;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double d = std::abs(lo) > 0 ? 0.05 * std::abs(lo) : 0.5;
      lo -= d;
      hi += d;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

}  // namespace detail

/// Renders a chart; an empty chart yields a frame with a note.
inline std::string render_svg(const Chart& c) {
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  detail::Range xr, yr;
  for (const auto& s : c.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
    for (double v : s.lo) yr.add(v);
    for (double v : s.hi) yr.add(v);
  }
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - T - B); };

  std::ostringstream o;
  o << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << W << R"(" height=")" << H
    << R"(" font-family="sans-serif" font-size="12">)" << '\n';
  o << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  o << R"(<text x=")" << W / 2 << R"(" y="20" text-anchor="middle" font-size="14">)" << detail::escape(c.title)
    << "</text>\n";
  o << R"(<rect x=")" << L << R"(" y=")" << T << R"(" width=")" << W - L - R << R"(" height=")" << H - T - B
    << R"(" fill="none" stroke="black"/>)" << '\n';
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0, yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    o << R"(<text x=")" << px(xv) << R"(" y=")" << H - B + 16 << R"(" text-anchor="middle">)" << detail::num(xv)
      << "</text>\n";
    o << R"(<text x=")" << L - 6 << R"(" y=")" << py(yv) + 4 << R"(" text-anchor="end">)" << detail::num(yv)
      << "</text>\n";
  }
  o << R"(<text x=")" << (L + W - R) / 2 << R"(" y=")" << H - 10 << R"(" text-anchor="middle">)"
    << detail::escape(c.x_label) << "</text>\n";
  o << R"(<text x="16" y=")" << (T + H - B) / 2 << R"svg(" text-anchor="middle" transform="rotate(-90 16 )svg"
    << (T + H - B) / 2 << R"svg()">)svg" << detail::escape(c.y_label) << "</text>\n";
  if (c.series.empty())
    o << R"(<text x=")" << (L + W - R) / 2 << R"(" y=")" << (T + H - B) / 2
      << R"(" text-anchor="middle" fill="gray">no data</text>)" << '\n';

  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const Series& s = c.series[i];
    const char* col = detail::color(i);
    const std::size_t n = std::min(s.x.size(), s.y.size());
    const bool have_bounds = s.lo.size() >= n && s.hi.size() >= n;
    if (s.style == Style::kBand && have_bounds && n > 0) {
      o << R"(<polygon fill=")" << col << R"(" fill-opacity="0.2" stroke="none" points=")";
      for (std::size_t k = 0; k < n; ++k) o << px(s.x[k]) << ',' << py(s.hi[k]) << ' ';
      for (std::size_t k = n; k-- > 0;) o << px(s.x[k]) << ',' << py(s.lo[k]) << ' ';
      o << "\"/>\n";
    }
    if (n > 1) {
      o << R"(<polyline fill="none" stroke=")" << col << R"(" stroke-width="1.5" points=")";
      for (std::size_t k = 0; k < n; ++k) o << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
      o << "\"/>\n";
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (s.style == Style::kErrorBars && have_bounds)
        o << R"(<line x1=")" << px(s.x[k]) << R"(" x2=")" << px(s.x[k]) << R"(" y1=")" << py(s.lo[k]) << R"(" y2=")"
          << py(s.hi[k]) << R"(" stroke=")" << col << "\"/>\n";
      if (s.style != Style::kBand || n == 1)
        o << R"(<circle cx=")" << px(s.x[k]) << R"(" cy=")" << py(s.y[k]) << R"(" r="2.5" fill=")" << col << "\"/>\n";
    }
    const double ly = T + 14 + 16.0 * static_cast<double>(i);
    o << R"(<rect x=")" << W - R + 10 << R"(" y=")" << ly - 9 << R"(" width="10" height="10" fill=")" << col << "\"/>\n";
    o << R"(<text x=")" << W - R + 24 << R"(" y=")" << ly << R"(">)" << detail::escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_svg(const fs::path& path, const Chart& c) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << render_svg(c);
}

/// One chart per NK metric: x = K, one series per (N, G, p_delete) with
/// min/max error bars. Metrics with no values are skipped. Returns the
/// files written.
inline std::vector<fs::path> emit_nk_plots(const std::vector<exp::AggregateRecord>& recs, const fs::path& dir) {
  struct Title {
    const char* metric;
    const char* title;
    const char* y;
  };
  static const Title titles[] = {
      {"final_fitness", "Fitness reached vs K", "mean final fitness"},
      {"final_length", "Genome length vs K", "mean final length"},
      {"walk_length", "Walk length to optimum vs K", "generations"},
      {"length_stop_generation", "Last length change vs K", "generations"},
      {"growth_generation_1", "Waiting time, gene 1", "generation"},
      {"growth_generation_2", "Waiting time, gene 2", "generation"},
      {"growth_generation_3", "Waiting time, gene 3", "generation"},
  };
  std::vector<fs::path> written;
  for (const auto& t : titles) {
    Chart c{t.title, "K", t.y, {}};
    std::map<std::vector<std::string>, std::size_t> index;
    for (const auto& r : recs) {
      if (r.metric != t.metric || r.n == 0 || r.cell.size() != 4) continue;
      const std::vector<std::string> key{r.cell[0], r.cell[2], r.cell[3]};
      auto [it, fresh] = index.try_emplace(key, c.series.size());
      if (fresh) {
        std::string label = "N=" + r.cell[0] + " G=" + r.cell[2];
        if (r.cell[3] != "0") label += " pdel=" + r.cell[3];
        c.series.push_back({label, Style::kErrorBars, {}, {}, {}, {}});
      }
      Series& s = c.series[it->second];
      s.x.push_back(exp::parse_double(r.cell[1]));
      s.y.push_back(r.mean);
      s.lo.push_back(r.min);
      s.hi.push_back(r.max);
    }
    if (c.series.empty()) continue;
    const fs::path p = dir / (std::string(t.metric) + ".svg");
    write_svg(p, c);
    written.push_back(p);
  }
  return written;
}

/// GA curves: best and mean fitness with 95% bands per arm, best type
/// count per arm, and population type composition per arm.
inline std::vector<fs::path> emit_ga_plots(const std::vector<std::pair<std::size_t, std::vector<exp::CurvePoint>>>& arms,
                                           const fs::path& dir) {
  std::vector<fs::path> written;
  auto arm_label = [](std::size_t a) { return a == 0 ? std::string("fixed") : "add-" + std::to_string(a); };
  Chart best{"Best individual fitness (mean, 95% CI)", "generation", "remaining cells", {}};
  Chart mean{"Population mean fitness (mean, 95% CI)", "generation", "remaining cells", {}};
  Chart types{"Best individual type count", "generation", "types", {}};
  for (const auto& [a, curve] : arms) {
    if (curve.empty()) continue;
    Series sb{arm_label(a), Style::kBand, {}, {}, {}, {}}, sm = sb, st{arm_label(a), Style::kLine, {}, {}, {}, {}};
    for (const auto& p : curve) {
      const auto g = static_cast<double>(p.generation);
      sb.x.push_back(g);
      sb.y.push_back(p.best.mean);
      sb.lo.push_back(p.best.mean - p.best.half_width);
      sb.hi.push_back(p.best.mean + p.best.half_width);
      sm.x.push_back(g);
      sm.y.push_back(p.mean.mean);
      sm.lo.push_back(p.mean.mean - p.mean.half_width);
      sm.hi.push_back(p.mean.mean + p.mean.half_width);
      st.x.push_back(g);
      st.y.push_back(p.best_type_count);
    }
    best.series.push_back(std::move(sb));
    mean.series.push_back(std::move(sm));
    types.series.push_back(std::move(st));

    Chart comp{"Population composition, " + arm_label(a), "generation", "share of population", {}};
    const std::size_t kmax = curve.front().type_share.size();
    for (std::size_t k = 0; k < kmax; ++k) {
      Series s{std::to_string(k + 1) + " types", Style::kLine, {}, {}, {}, {}};
      bool any = false;
      for (const auto& p : curve) {
        s.x.push_back(static_cast<double>(p.generation));
        s.y.push_back(p.type_share[k]);
        any = any || p.type_share[k] > 0.0;
      }
      if (any) comp.series.push_back(std::move(s));
    }
    const fs::path cp = dir / ("ga_composition_" + arm_label(a) + ".svg");
    write_svg(cp, comp);
    written.push_back(cp);
  }
  if (best.series.empty()) return written;
  for (auto* c : {&best, &mean, &types}) {
    const char* name = c == &best ? "ga_best_fitness.svg" : c == &mean ? "ga_mean_fitness.svg" : "ga_type_count.svg";
    write_svg(dir / name, *c);
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace varlen::plot
