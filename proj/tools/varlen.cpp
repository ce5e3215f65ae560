// varlen: command-line front end for NK walks, grids, the tumour analogue
// and GA runs.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "varlen/adaptive_walk.hpp"
#include "varlen/config.hpp"
#include "varlen/evo_ga.hpp"
#include "varlen/experiments.hpp"
#include "varlen/nk_landscape.hpp"
#include "varlen/plot_svg.hpp"
#include "varlen/tumor_sim.hpp"

namespace fs = std::filesystem;
using namespace varlen;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  bool verbose = false;
  bool dry_run = false;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("-c,--config", c.config, "YAML config file");
  if (config_required) opt->required();
  app->add_option("-o,--out", c.out, "Output directory (default: $VARLEN_OUT_DIR or ./out)");
  app->add_option("-s,--seed", c.seed, "Seed override; wins over the config seed");
  app->add_option("-w,--workers", c.workers, "Concurrent replicates")->check(CLI::PositiveNumber);
  app->add_flag("-v,--verbose", c.verbose, "Print per-replicate progress");
  app->add_flag("--dry-run", c.dry_run, "Validate the config and print the planned replicate count");
}

fs::path out_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("VARLEN_OUT_DIR"); env && *env) return env;
  return "out";
}

YAML::Node config_node(const Common& c) { return c.config.empty() ? YAML::Node() : config::load_file(c.config); }

exp::RunOptions run_options(const Common& c) {
  exp::RunOptions o;
  o.workers = c.workers;
  if (c.verbose) o.log = [](const std::string& s) { std::cerr << s << '\n'; };
  return o;
}

tumor::SimState tumor_from(const config::TumorSource& t, const tumor::SimParams& p) {
  if (!t.fixture.empty()) return tumor::load_state_file(t.fixture);
  return tumor::grow_tumor(p, t.grow_days, t.grow_seed);
}

// --- nk-walk ---------------------------------------------------------------

struct NkWalkArgs {
  std::size_t n = 20, k = 2, g = 0, generations = 20000;
  std::string mode;  // fixed | grow | delete; default: fixed if g == 0 else grow
  std::uint64_t landscape_seed = 0;
  std::optional<std::uint64_t> seed;
  bool series = false;
  std::string out;
};

int cmd_nk_walk(const NkWalkArgs& a) {
  std::string mode = a.mode.empty() ? (a.g == 0 ? "fixed" : "grow") : a.mode;
  const std::uint64_t seed = a.seed.value_or(0);
  WalkConfig cfg;
  if (mode == "fixed") {
    cfg = WalkConfig::fixed(a.generations, seed);
  } else if (mode == "grow") {
    cfg = WalkConfig::growth(a.generations, a.g, seed);
  } else if (mode == "delete") {
    cfg = WalkConfig::growth_deletion(a.generations, a.g, seed);
  } else {
    std::cerr << "error: --mode must be fixed, grow or delete\n";
    return kConfigError;
  }
  cfg.record_series = a.series;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  if (a.k >= a.n) {
    std::cerr << "error: --k must be below --n\n";
    return kConfigError;
  }
  const std::uint64_t lseed = a.landscape_seed ? a.landscape_seed : derive_seed({seed, 0x4e4b});
  std::cout << "seed=" << seed << " landscape_seed=" << lseed << '\n';
  const WalkTrace t = run_walk(NkLandscape::generate(a.n, a.k, lseed), cfg);
  std::cout << "final_fitness=" << exp::fmt_double(t.final_fitness) << " final_length=" << t.final_length
            << " walk_length=" << t.walk_length_to_optimum << " accepted_growth=" << t.accepted_growth_generations.size()
            << '\n';
  if (a.series) {
    const fs::path dir = a.out.empty() ? fs::path("out") : fs::path(a.out);
    fs::create_directories(dir);
    std::ofstream os(dir / "walk_series.csv");
    os << "generation,fitness,length\n";
    for (std::size_t i = 0; i < t.fitness_series.size(); ++i)
      os << i + 1 << ',' << exp::fmt_double(t.fitness_series[i]) << ',' << t.length_series[i] << '\n';
  }
  return kOk;
}

// --- grids -----------------------------------------------------------------

int cmd_nk_grid(const Common& c) {
  exp::NkGrid grid = config::nk_grid_from(config_node(c));
  if (c.seed) grid.master_seed = *c.seed;
  std::cout << "kind=" << exp::to_string(grid.kind) << " master_seed=" << grid.master_seed
            << " planned_replicates=" << exp::planned_replicates(grid) << '\n';
  if (c.dry_run) return kOk;
  const fs::path dir = out_dir(c);
  const auto res = exp::run_nk_grid(grid, dir, run_options(c));
  std::cout << "executed=" << res.run.executed << " resumed=" << res.run.resumed
            << " failed=" << res.run.warnings.size() << " out=" << dir.string() << '\n';
  try {
    plot::emit_nk_plots(res.aggregates, dir / "plots");
  } catch (const std::exception& e) {
    std::cerr << "warning: plotting failed, CSV only: " << e.what() << '\n';
  }
  return res.run.warnings.empty() ? kOk : kRuntimeError;
}

void emit_ga_outputs(const exp::GaGrid& grid, const fs::path& dir) {
  std::vector<std::pair<std::size_t, std::vector<exp::CurvePoint>>> curves;
  for (const auto& arm : grid.arms()) curves.emplace_back(arm.types_added, exp::ga_curve(dir, arm.types_added, grid.runs));
  exp::write_curves_csv(dir / "curves.csv", curves);
  try {
    plot::emit_ga_plots(curves, dir / "plots");
  } catch (const std::exception& e) {
    std::cerr << "warning: plotting failed, CSV only: " << e.what() << '\n';
  }
}

int cmd_ga_grid(const Common& c) {
  exp::GaGrid grid = config::ga_grid_from(config_node(c));
  if (c.seed) grid.master_seed = *c.seed;
  std::cout << "kind=" << exp::to_string(grid.kind) << " master_seed=" << grid.master_seed
            << " planned_replicates=" << exp::planned_replicates(grid) << '\n';
  if (c.dry_run) return kOk;
  const fs::path dir = out_dir(c);
  const auto res = exp::run_ga_grid(grid, dir, run_options(c));
  emit_ga_outputs(grid, dir);
  std::cout << "executed=" << res.run.executed << " resumed=" << res.run.resumed
            << " failed=" << res.run.warnings.size() << " out=" << dir.string() << '\n';
  return res.run.warnings.empty() ? kOk : kRuntimeError;
}

// --- tumour ----------------------------------------------------------------

int cmd_tumor_grow(const Common& c, std::optional<double> days) {
  config::TumorGrowConfig cfg = config::tumor_grow_from(config_node(c));
  if (c.seed) cfg.seed = *c.seed;
  if (days) cfg.days = *days;
  std::cout << "seed=" << cfg.seed << " days=" << cfg.days << '\n';
  if (c.dry_run) return kOk;
  const tumor::SimState s = tumor::grow_tumor(cfg.sim, cfg.days, cfg.seed);
  const fs::path dir = out_dir(c);
  fs::create_directories(dir);
  const fs::path path = dir / cfg.output;
  tumor::save_state_file(path.string(), s);
  std::cout << "live_cells=" << s.live_cells() << " fixture=" << path.string() << '\n';
  return kOk;
}

int cmd_sim_eval(const Common& c) {
  config::SimEvalConfig cfg = config::sim_eval_from(config_node(c));
  if (c.seed) cfg.seed = *c.seed;
  std::cout << "seed=" << cfg.seed << " types=" << cfg.treatment.type_count() << " samples=" << cfg.samples << '\n';
  if (c.dry_run) return kOk;
  const tumor::SimState base = tumor_from(cfg.tumor, cfg.sim);
  const fs::path dir = out_dir(c);
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::uint64_t seed = derive_seed({cfg.seed, i});
    std::ofstream tel;
    if (cfg.telemetry) {
      fs::create_directories(dir);
      tel.open(dir / ("telemetry_" + std::to_string(i) + ".csv"));
    }
    const auto out = tumor::run_treatment(base, cfg.treatment, cfg.sim, cfg.days, seed, cfg.telemetry ? &tel : nullptr);
    sum += static_cast<double>(out.remaining);
    std::cout << "sample=" << i << " remaining=" << out.remaining << " deposited=" << out.deposited
              << " births=" << out.births << " damage_deaths=" << out.damage_deaths
              << " drug_deaths=" << out.drug_deaths << '\n';
  }
  std::cout << "initial_cells=" << base.live_cells() << " mean_remaining=" << sum / static_cast<double>(cfg.samples)
            << '\n';
  return kOk;
}

int cmd_ga_run(const Common& c) {
  config::GaRunConfig cfg = config::ga_run_from(config_node(c));
  if (c.seed) cfg.ga.seed = *c.seed;
  std::cout << "seed=" << cfg.ga.seed << " p_add_type=" << cfg.ga.p_add_type
            << " generations=" << cfg.ga.generations() << '\n';
  if (c.dry_run) return kOk;
  const tumor::SimState base = tumor_from(cfg.tumor, cfg.sim);
  const auto evaluator = ga::tumor_evaluator(base, cfg.sim, cfg.treatment_days);
  const auto trace = ga::run_ga(evaluator, cfg.ga);
  const fs::path dir = out_dir(c);
  fs::create_directories(dir);
  std::ofstream os(dir / "ga_trace.csv");
  ga::write_trace_csv(os, trace);
  std::cout << "initial_best=" << trace.generations.front().best_fitness
            << " final_best=" << trace.last().best_fitness << " best_type_count=" << trace.last().best_type_count
            << " evaluations=" << trace.evaluations << " initial_evaluations=" << trace.initial_evaluations
            << " trace=" << (dir / "ga_trace.csv").string() << '\n';
  return kOk;
}

// --- plot ------------------------------------------------------------------

int cmd_plot(const Common& c) {
  const fs::path dir = out_dir(c);
  std::ifstream in(dir / "raw.csv");
  std::string header;
  if (!in || !std::getline(in, header)) {
    std::cerr << "error: no raw.csv in " << dir.string() << '\n';
    return kRuntimeError;
  }
  const auto pos = header.find("kind=");
  const auto kind = pos == std::string::npos ? std::nullopt : exp::parse_kind(header.substr(pos + 5));
  if (!kind) {
    std::cerr << "error: raw.csv header does not name a grid kind\n";
    return kRuntimeError;
  }
  if (exp::is_nk(*kind)) {
    const auto recs = exp::reaggregate(dir, exp::nk_schema(*kind));
    const auto files = plot::emit_nk_plots(recs, dir / "plots");
    std::cout << "plots=" << files.size() << '\n';
    return kOk;
  }
  const auto schema = exp::ga_schema(*kind);
  const auto rows = exp::read_raw(dir / "raw.csv", schema);
  const auto recs = exp::aggregate(schema, rows);
  exp::write_aggregate(dir / "aggregate.csv", schema, recs);
  std::size_t runs = 0;
  std::vector<std::size_t> arms;
  for (const auto& r : rows) {
    runs = std::max<std::size_t>(runs, std::stoul(r[2]) + 1);
    const auto a = std::stoul(r[0]);
    if (std::find(arms.begin(), arms.end(), a) == arms.end()) arms.push_back(a);
  }
  std::vector<std::pair<std::size_t, std::vector<exp::CurvePoint>>> curves;
  for (auto a : arms) curves.emplace_back(a, exp::ga_curve(dir, a, runs));
  exp::write_curves_csv(dir / "curves.csv", curves);
  const auto files = plot::emit_ga_plots(curves, dir / "plots");
  std::cout << "plots=" << files.size() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-length genome experiments: NK adaptive walks and a tumour-treatment GA"};
  app.require_subcommand(1, 1);
  app.footer("Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.\n"
             "VARLEN_OUT_DIR sets the default output directory.");

  NkWalkArgs walk;
  auto* nk_walk = app.add_subcommand("nk-walk", "Run one adaptive walk and print a summary line");
  nk_walk->add_option("--n", walk.n, "Initial genome length")->check(CLI::PositiveNumber);
  nk_walk->add_option("--k", walk.k, "Epistatic links per gene");
  nk_walk->add_option("--g", walk.g, "Genes added per growth event (0 = fixed length)");
  nk_walk->add_option("--generations", walk.generations, "Generations");
  nk_walk->add_option("--mode", walk.mode, "fixed | grow | delete (default from --g)");
  nk_walk->add_option("--seed", walk.seed, "Walk seed");
  nk_walk->add_option("--landscape-seed", walk.landscape_seed, "Landscape seed (default derived from --seed)");
  nk_walk->add_flag("--series", walk.series, "Write walk_series.csv to --out");
  nk_walk->add_option("-o,--out", walk.out, "Output directory for --series");

  Common nk_grid_c, ga_grid_c, grow_c, eval_c, ga_run_c, plot_c;
  auto* nk_grid = app.add_subcommand("nk-grid", "Run an NK experiment grid");
  add_common(nk_grid, nk_grid_c, true);
  auto* ga_grid = app.add_subcommand("ga-grid", "Run a GA experiment grid on the tumour analogue");
  add_common(ga_grid, ga_grid_c, true);
  std::optional<double> grow_days;
  auto* grow = app.add_subcommand("tumor-grow", "Grow a tumour fixture and save it");
  add_common(grow, grow_c, false);
  grow->add_option("--days", grow_days, "Growth period in days (overrides config)");
  auto* eval = app.add_subcommand("sim-eval", "Evaluate one treatment on a tumour");
  add_common(eval, eval_c, true);
  auto* ga_run = app.add_subcommand("ga-run", "Run one GA and write its trace");
  add_common(ga_run, ga_run_c, true);
  auto* plot_cmd = app.add_subcommand("plot", "Re-aggregate an output directory and render plots");
  add_common(plot_cmd, plot_c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*nk_walk) return cmd_nk_walk(walk);
    if (*nk_grid) return cmd_nk_grid(nk_grid_c);
    if (*ga_grid) return cmd_ga_grid(ga_grid_c);
    if (*grow) return cmd_tumor_grow(grow_c, grow_days);
    if (*eval) return cmd_sim_eval(eval_c);
    if (*ga_run) return cmd_ga_run(ga_run_c);
    if (*plot_cmd) return cmd_plot(plot_c);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
