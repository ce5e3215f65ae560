#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "varlen/experiments.hpp"
#include "varlen/plot_svg.hpp"

using namespace varlen;
using namespace varlen::exp;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("varlen_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NkGrid small_grid() {
  NkGrid g;
  g.kind = Kind::kNkGrow;
  g.n_values = {8};
  g.k_values = {0, 3};
  g.g_values = {1};
  g.landscapes = 2;
  g.starts = 3;
  g.generations = 400;
  g.master_seed = 11;
  return g;
}

GaGrid small_ga_grid() {
  GaGrid g;
  g.kind = Kind::kGaGrow;
  g.types_added_values = {0, 1, 2};
  g.runs = 3;
  g.base.population_size = 6;
  g.base.samples_per_evaluation = 2;
  g.base.evaluation_budget = 40;
  g.master_seed = 5;
  return g;
}

double toy_fitness(const tumor::Treatment& t, std::uint64_t seed) {
  double f = static_cast<double>(seed % 7);
  for (const auto& d : t.np_types) f += d.relative_adhesion - d.attached_migration_bias;
  return f / static_cast<double>(t.type_count());
}

}  // namespace

TEST(Format, DoublesRoundTrip) {
  for (double v : {0.0, 0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) EXPECT_EQ(parse_double(fmt_double(v)), v);
  EXPECT_EQ(fmt_double(0.25), "0.25");
  EXPECT_THROW(parse_double("abc"), std::runtime_error);
  EXPECT_THROW(parse_double("1.5x"), std::runtime_error);
}

TEST(Format, CsvSplitJoin) {
  const std::vector<std::string> f{"a", "", "1.5"};
  EXPECT_EQ(split_csv(join_csv(f)), f);
}

TEST(Kinds, RoundTrip) {
  for (Kind k : {Kind::kNkFixed, Kind::kNkGrow, Kind::kNkDelete, Kind::kNkDeleteSweep, Kind::kGaFixed, Kind::kGaGrow})
    EXPECT_EQ(parse_kind(to_string(k)), k);
  EXPECT_FALSE(parse_kind("nk-other").has_value());
}

TEST(Seeds, PairedAcrossArms) {
  const NkCell a{20, 4, 1, 0.0}, b{20, 4, 20, 0.125};
  EXPECT_EQ(landscape_seed(2021, a, 3), landscape_seed(2021, b, 3));
  EXPECT_EQ(walk_seed(2021, a, 3, 4), walk_seed(2021, b, 3, 4));
  EXPECT_NE(walk_seed(2021, a, 3, 4), walk_seed(2021, a, 3, 5));
  EXPECT_NE(landscape_seed(2021, a, 3), landscape_seed(2021, NkCell{20, 6, 1, 0.0}, 3));
}

TEST(Grid, ExpandAndCount) {
  NkGrid g;
  g.kind = Kind::kNkFixed;
  g.g_values = {1, 20};
  EXPECT_EQ(expand(g).size(), 18u);  // fixed-length ignores G
  EXPECT_EQ(planned_replicates(g), 1800u);
  g.kind = Kind::kNkDeleteSweep;
  EXPECT_EQ(expand(g).size(), 2u * 9u * 2u * 5u);
  g.k_values = {25};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Grid, IdenticalAcrossWorkerCounts) {
  TempDir a, b;
  run_nk_grid(small_grid(), a.path(), {1, true, {}});
  run_nk_grid(small_grid(), b.path(), {3, true, {}});
  EXPECT_EQ(slurp(a / "raw.csv"), slurp(b / "raw.csv"));
  EXPECT_EQ(slurp(a / "aggregate.csv"), slurp(b / "aggregate.csv"));
  EXPECT_FALSE(slurp(a / "raw.csv").empty());
}

TEST(Grid, ResumeSkipsCompletedRows) {
  TempDir d;
  const auto full = run_nk_grid(small_grid(), d.path());
  EXPECT_EQ(full.run.executed, 12u);
  const std::string before = slurp(d / "raw.csv");
  // Drop the last two rows as an interrupted run would.
  std::string cut = before;
  for (int i = 0; i < 2; ++i) cut.erase(cut.rfind('\n', cut.size() - 2) + 1);
  std::ofstream(d / "raw.csv", std::ios::trunc) << cut;
  const auto resumed = run_nk_grid(small_grid(), d.path());
  EXPECT_EQ(resumed.run.executed, 2u);
  EXPECT_EQ(resumed.run.resumed, 10u);
  EXPECT_EQ(slurp(d / "raw.csv"), before);
  const auto again = run_nk_grid(small_grid(), d.path(), {1, false, {}});
  EXPECT_EQ(again.run.executed, 12u);
  EXPECT_EQ(slurp(d / "raw.csv"), before);
}

TEST(Grid, ReaggregationMatches) {
  TempDir d;
  const auto out = run_nk_grid(small_grid(), d.path());
  const std::string agg = slurp(d / "aggregate.csv");
  fs::remove(d / "aggregate.csv");
  const auto recs = reaggregate(d.path(), out.schema);
  EXPECT_EQ(slurp(d / "aggregate.csv"), agg);
  EXPECT_EQ(recs.size(), out.aggregates.size());
}

TEST(Grid, RawHeaderCarriesVersionAndKind) {
  TempDir d;
  run_nk_grid(small_grid(), d.path());
  const std::string raw = slurp(d / "raw.csv");
  EXPECT_EQ(raw.rfind("# varlen raw v1 kind=nk-grow\n", 0), 0u) << raw.substr(0, 60);
}

TEST(Grid, MetricsSatisfyWalkInvariants) {
  TempDir d;
  const auto out = run_nk_grid(small_grid(), d.path());
  for (const auto& cell : expand(small_grid())) {
    for (double f : nk_values(out, cell, "final_fitness")) EXPECT_TRUE(f >= 0.0 && f <= 1.0);
    for (double l : nk_values(out, cell, "final_length")) EXPECT_GE(l, 8.0);
    EXPECT_EQ(nk_values(out, cell, "final_fitness").size(), 6u);
  }
}

TEST(Aggregate, StatsOrderedAndMissingSkipped) {
  RawSchema s{"toy", {"x"}, {"m", "e"}};
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < 5; ++i) rows.push_back({"a", std::to_string(i), "0", std::to_string(i * i), ""});
  rows.push_back({"b", "0", "0", "7", "1"});
  const auto recs = aggregate(s, rows);
  ASSERT_EQ(recs.size(), 4u);
  const auto& m = recs[0];
  EXPECT_EQ(m.cell, (std::vector<std::string>{"a"}));
  EXPECT_EQ(m.n, 5u);
  EXPECT_DOUBLE_EQ(m.mean, 6.0);
  EXPECT_DOUBLE_EQ(m.min, 0.0);
  EXPECT_DOUBLE_EQ(m.max, 16.0);
  EXPECT_GT(m.ci_half_width, 0.0);
  EXPECT_EQ(recs[1].n, 0u);
  EXPECT_EQ(recs[2].n, 1u);
  EXPECT_EQ(recs[2].ci_half_width, 0.0);
  for (const auto& r : recs)
    if (r.n > 0) EXPECT_TRUE(r.min <= r.mean && r.mean <= r.max);
}

TEST(Runner, FailuresBecomeWarnings) {
  TempDir d;
  RawSchema s{"toy", {"x"}, {"m"}};
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < 3; ++r)
    tasks.push_back({{"a"}, r, r, [r]() -> std::vector<std::string> {
                       if (r == 1) throw std::runtime_error("boom");
                       return {std::to_string(r)};
                     }});
  const auto res = run_tasks(s, {{"a"}}, std::move(tasks), d.path(), {2, true, {}});
  EXPECT_EQ(res.rows.size(), 2u);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_EQ(res.warnings[0].replicate, 1u);
  EXPECT_NE(slurp(d / "warnings.csv").find("boom"), std::string::npos);
  EXPECT_EQ(read_raw(d / "raw.csv", s).size(), 2u);
}

TEST(GaGridRun, ArmsShareInitialPopulationAndBudget) {
  TempDir d;
  const GaGrid g = small_ga_grid();
  const auto out = run_ga_grid(g, d.path(), {2, true, {}}, toy_fitness);
  EXPECT_TRUE(out.run.warnings.empty());
  for (std::size_t r = 0; r < g.runs; ++r) {
    std::vector<double> init;
    for (const auto& arm : g.arms())
      for (const auto& row : out.run.rows)
        if (row.fields[0] == std::to_string(arm.types_added) && row.fields[2] == std::to_string(r))
          init.push_back(parse_double(row.fields[4]));
    ASSERT_EQ(init.size(), 3u);
    EXPECT_EQ(init[0], init[1]);
    EXPECT_EQ(init[1], init[2]);
  }
  for (double e : cell_values(out, {"1", "0.5"}, "evaluations")) EXPECT_EQ(e, 40.0);
  for (double e : cell_values(out, {"1", "0.5"}, "initial_evaluations")) EXPECT_EQ(e, 12.0);
  for (double t : cell_values(out, {"0", "0"}, "final_best_type_count")) EXPECT_EQ(t, 1.0);
  for (std::size_t r = 0; r < g.runs; ++r) {
    const auto rows = read_trace_csv(trace_path(d.path(), 2, r));
    EXPECT_EQ(rows.size(), 21u);
  }
  const auto curve = ga_curve(d.path(), 1, g.runs);
  ASSERT_EQ(curve.size(), 21u);
  for (const auto& p : curve) {
    double share = 0;
    for (double s : p.type_share) share += s;
    EXPECT_NEAR(share, 1.0, 1e-12);
  }
}

TEST(GaGridRun, Deterministic) {
  TempDir a, b;
  run_ga_grid(small_ga_grid(), a.path(), {1, true, {}}, toy_fitness);
  run_ga_grid(small_ga_grid(), b.path(), {3, true, {}}, toy_fitness);
  EXPECT_EQ(slurp(a / "raw.csv"), slurp(b / "raw.csv"));
  EXPECT_EQ(slurp(a / "traces/ga_add2_run1.csv"), slurp(b / "traces/ga_add2_run1.csv"));
}

TEST(Plots, EmptyAndSinglePointCharts) {
  const std::string empty = plot::render_svg({"t", "x", "y", {}});
  EXPECT_NE(empty.find("no data"), std::string::npos);
  EXPECT_NE(empty.find("</svg>"), std::string::npos);
  plot::Chart one{"t", "x", "y", {{"s", plot::Style::kErrorBars, {1.0}, {2.0}, {2.0}, {2.0}}}};
  const std::string svg = plot::render_svg(one);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}

TEST(Plots, NkAndGaFilesWritten) {
  TempDir d;
  const auto out = run_nk_grid(small_grid(), d / "nk");
  const auto files = plot::emit_nk_plots(out.aggregates, d / "plots");
  EXPECT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f));
  EXPECT_TRUE(fs::exists(d / "plots/final_fitness.svg"));
  run_ga_grid(small_ga_grid(), d / "ga", {}, toy_fitness);
  std::vector<std::pair<std::size_t, std::vector<CurvePoint>>> arms;
  for (std::size_t a : {0u, 1u, 2u}) arms.emplace_back(a, ga_curve(d / "ga", a, 3));
  const auto gf = plot::emit_ga_plots(arms, d / "gaplots");
  EXPECT_EQ(gf.size(), 6u);
  EXPECT_TRUE(fs::exists(d / "gaplots/ga_best_fitness.svg"));
}
