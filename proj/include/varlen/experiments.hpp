#pragma once

// Batch harness: NK walk grids and GA grids, replicated with derived seeds,
// written as resumable raw CSV plus per-cell aggregates.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "varlen/adaptive_walk.hpp"
#include "varlen/evo_ga.hpp"
#include "varlen/nk_landscape.hpp"
#include "varlen/random.hpp"
#include "varlen/stats.hpp"
#include "varlen/tumor_sim.hpp"

namespace varlen::exp {

namespace fs = std::filesystem;

inline constexpr int kCsvVersion = 1;

enum class Kind { kNkFixed, kNkGrow, kNkDelete, kNkDeleteSweep, kGaFixed, kGaGrow };

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::kNkFixed: return "nk-fixed";
    case Kind::kNkGrow: return "nk-grow";
    case Kind::kNkDelete: return "nk-delete";
    case Kind::kNkDeleteSweep: return "nk-delete-sweep";
    case Kind::kGaFixed: return "ga-fixed";
    case Kind::kGaGrow: return "ga-grow";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(const std::string& s) {
  for (Kind k : {Kind::kNkFixed, Kind::kNkGrow, Kind::kNkDelete, Kind::kNkDeleteSweep, Kind::kGaFixed, Kind::kGaGrow})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline bool is_nk(Kind k) { return k != Kind::kGaFixed && k != Kind::kGaGrow; }

/// Shortest round-trip text for a double.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw std::runtime_error("bad number in CSV: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s.push_back(',');
    s += fields[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Grids

struct NkGrid {
  Kind kind = Kind::kNkFixed;
  std::vector<std::size_t> n_values{20, 100};
  std::vector<std::size_t> k_values{0, 2, 4, 6, 8, 10, 12, 14, 15};
  std::vector<std::size_t> g_values{1};
  std::vector<double> p_delete_values{0.0, 0.0625, 0.125, 0.1875, 0.25};  // sweep only
  double sweep_p_add = 0.25;
  std::size_t landscapes = 10;
  std::size_t starts = 10;
  std::size_t generations = 20000;
  std::uint64_t master_seed = 0;

  std::size_t replicates() const { return landscapes * starts; }

  void validate() const {
    if (!is_nk(kind)) throw std::invalid_argument("NK grid with a GA kind");
    if (n_values.empty() || k_values.empty()) throw std::invalid_argument("grid axes n and k must be non-empty");
    if (kind != Kind::kNkFixed && g_values.empty()) throw std::invalid_argument("grid axis g must be non-empty");
    if (kind == Kind::kNkDeleteSweep && p_delete_values.empty())
      throw std::invalid_argument("grid axis p_delete must be non-empty");
    if (landscapes < 1 || starts < 1) throw std::invalid_argument("replicate counts must be at least 1");
    for (auto n : n_values)
      if (n < 1) throw std::invalid_argument("n must be at least 1");
    for (auto n : n_values)
      for (auto k : k_values)
        if (k >= n) throw std::invalid_argument("k=" + std::to_string(k) + " must be below n=" + std::to_string(n));
    if (kind != Kind::kNkFixed)
      for (auto g : g_values)
        if (g < 1) throw std::invalid_argument("g must be at least 1 for growth kinds");
    for (double p : p_delete_values)
      if (!(p >= 0.0 && p + sweep_p_add <= 1.0)) throw std::invalid_argument("p_delete out of range");
  }
};

struct NkCell {
  std::size_t n = 0, k = 0, g = 0;
  double p_delete = 0.0;
};

inline std::vector<NkCell> expand(const NkGrid& grid) {
  std::vector<NkCell> cells;
  const std::vector<std::size_t> gs = grid.kind == Kind::kNkFixed ? std::vector<std::size_t>{0} : grid.g_values;
  std::vector<double> ps{0.0};
  if (grid.kind == Kind::kNkDelete) ps = {0.25};
  if (grid.kind == Kind::kNkDeleteSweep) ps = grid.p_delete_values;
  for (auto n : grid.n_values)
    for (auto k : grid.k_values)
      for (auto g : gs)
        for (double p : ps) cells.push_back({n, k, g, p});
  return cells;
}

inline WalkConfig walk_config(Kind kind, const NkCell& cell, std::size_t generations, std::uint64_t seed) {
  switch (kind) {
    case Kind::kNkFixed: return WalkConfig::fixed(generations, seed);
    case Kind::kNkGrow: return WalkConfig::growth(generations, cell.g, seed);
    case Kind::kNkDelete: return WalkConfig::growth_deletion(generations, cell.g, seed);
    default: break;
  }
  WalkConfig c = WalkConfig::growth(generations, cell.g, seed);
  c.p_add = 0.25;
  c.p_delete = cell.p_delete;
  c.p_allele = 1.0 - c.p_add - c.p_delete;
  return c;
}

inline std::uint64_t landscape_seed(std::uint64_t master, const NkCell& c, std::size_t landscape) {
  return derive_seed({master, 0x4e4b, c.n, c.k, landscape});
}

inline std::uint64_t walk_seed(std::uint64_t master, const NkCell& c, std::size_t landscape, std::size_t start) {
  return derive_seed({master, 0x57a1, c.n, c.k, landscape, start});
}

/// One variable-length arm: types_added 0 is the fixed-length GA.
struct GaArm {
  std::size_t types_added = 0;
  double p_add = 0.0;
};

struct GaGrid {
  Kind kind = Kind::kGaGrow;
  std::vector<std::size_t> types_added_values{1};
  double p_add_type = 0.5;
  std::size_t runs = 10;
  ga::GaConfig base;
  tumor::SimParams sim;
  double treatment_days = 3.0;
  std::string tumor_fixture;  // empty: grow one
  double grow_days = 7.0;
  std::uint64_t grow_seed = 1;
  std::uint64_t master_seed = 0;

  std::vector<GaArm> arms() const {
    if (kind == Kind::kGaFixed) return {{0, 0.0}};
    std::vector<GaArm> out;
    for (auto t : types_added_values) out.push_back({t, t == 0 ? 0.0 : p_add_type});
    return out;
  }

  void validate() const {
    if (is_nk(kind)) throw std::invalid_argument("GA grid with an NK kind");
    if (kind == Kind::kGaGrow && types_added_values.empty())
      throw std::invalid_argument("grid axis types_added must be non-empty");
    if (runs < 1) throw std::invalid_argument("runs must be at least 1");
    if (!(treatment_days > 0.0)) throw std::invalid_argument("treatment_days must be positive");
    for (const auto& a : arms()) {
      ga::GaConfig c = base;
      c.p_add_type = a.p_add;
      c.types_added_per_event = std::max<std::size_t>(1, a.types_added);
      c.validate();
    }
    sim.validate();
  }
};

/// Seeds the shared initial population of run r; independent of the arm.
inline std::uint64_t ga_initial_seed(std::uint64_t master, std::size_t run) { return derive_seed({master, 0x1b17, run}); }
inline std::uint64_t ga_run_seed(std::uint64_t master, std::size_t run) { return derive_seed({master, 0x6a6a, run}); }

// ---------------------------------------------------------------------------
// Resumable raw table

struct Task {
  std::vector<std::string> cell;  // cell coordinate values
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::function<std::vector<std::string>()> run;  // metric values; "" = missing
};

struct RawRow {
  std::size_t cell_index = 0;
  std::vector<std::string> fields;  // full row as written
};

struct Warning {
  std::vector<std::string> cell;
  std::size_t replicate = 0;
  std::string message;
};

struct RawSchema {
  std::string kind;
  std::vector<std::string> cell_columns;
  std::vector<std::string> metric_columns;

  std::vector<std::string> columns() const {
    auto c = cell_columns;
    c.push_back("replicate");
    c.push_back("seed");
    c.insert(c.end(), metric_columns.begin(), metric_columns.end());
    return c;
  }
  std::string version_line(const char* what) const {
    return "# varlen " + std::string(what) + " v" + std::to_string(kCsvVersion) + " kind=" + kind;
  }
};

struct RunOptions {
  std::size_t workers = 1;
  bool resume = true;
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

struct RunResult {
  std::size_t executed = 0;
  std::size_t resumed = 0;
  std::vector<Warning> warnings;
  std::vector<RawRow> rows;  // sorted by (cell, replicate)
};

/// Reads rows of a previous raw.csv with the same schema. A missing file or
/// a different header yields nothing.
inline std::vector<std::vector<std::string>> read_raw(const fs::path& path, const RawSchema& schema) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line) || line != schema.version_line("raw")) return rows;
  if (!std::getline(in, line) || line != join_csv(schema.columns())) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() == schema.columns().size()) rows.push_back(std::move(f));
  }
  return rows;
}

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return s;
}

/// Runs every task not already present in out_dir/raw.csv, then rewrites
/// raw.csv sorted by (cell order, replicate). Completed rows are appended
/// as they finish so an interrupted run can resume.
inline RunResult run_tasks(const RawSchema& schema, std::vector<std::vector<std::string>> cell_order,
                           std::vector<Task> tasks, const fs::path& out_dir, const RunOptions& opt) {
  fs::create_directories(out_dir);
  const fs::path raw_path = out_dir / "raw.csv";
  const std::size_t ncell = schema.cell_columns.size();

  std::map<std::vector<std::string>, std::size_t> cell_index;
  for (std::size_t i = 0; i < cell_order.size(); ++i) cell_index.emplace(cell_order[i], i);

  auto key_of = [&](const std::vector<std::string>& cell, std::size_t rep) {
    auto k = cell;
    k.push_back(std::to_string(rep));
    return k;
  };

  RunResult result;
  std::map<std::vector<std::string>, std::vector<std::string>> done;
  if (opt.resume) {
    for (auto& f : read_raw(raw_path, schema)) {
      std::vector<std::string> key(f.begin(), f.begin() + static_cast<long>(ncell) + 1);
      done.emplace(std::move(key), std::move(f));
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!cell_index.count(tasks[i].cell)) throw std::logic_error("task cell missing from cell order");
    if (!done.count(key_of(tasks[i].cell, tasks[i].replicate))) pending.push_back(i);
  }
  result.resumed = tasks.size() - pending.size();

  // Rewrite the header plus resumed rows, then append as tasks finish.
  {
    std::ofstream out(raw_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + raw_path.string());
    out << schema.version_line("raw") << '\n' << join_csv(schema.columns()) << '\n';
    for (const auto& [k, f] : done) out << join_csv(f) << '\n';
  }
  std::ofstream append(raw_path, std::ios::app);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::vector<std::optional<std::vector<std::string>>> produced(tasks.size());
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= pending.size()) return;
      const Task& t = tasks[pending[j]];
      std::vector<std::string> row = t.cell;
      row.push_back(std::to_string(t.replicate));
      row.push_back(std::to_string(t.seed));
      try {
        auto metrics = t.run();
        if (metrics.size() != schema.metric_columns.size()) throw std::logic_error("metric count mismatch");
        row.insert(row.end(), metrics.begin(), metrics.end());
        std::lock_guard lock(mu);
        append << join_csv(row) << '\n';
        append.flush();
        produced[pending[j]] = std::move(row);
        if (opt.log) opt.log("done " + join_csv(t.cell) + " replicate " + std::to_string(t.replicate));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        result.warnings.push_back({t.cell, t.replicate, sanitize(e.what())});
        if (opt.log) opt.log("FAILED " + join_csv(t.cell) + " replicate " + std::to_string(t.replicate) + ": " + e.what());
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(opt.workers, pending.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
  }
  append.close();
  result.executed = pending.size() - result.warnings.size();

  for (auto& [k, f] : done) result.rows.push_back({cell_index.at({f.begin(), f.begin() + static_cast<long>(ncell)}), f});
  for (auto& p : produced)
    if (p) result.rows.push_back({cell_index.at({p->begin(), p->begin() + static_cast<long>(ncell)}), std::move(*p)});
  std::sort(result.rows.begin(), result.rows.end(), [&](const RawRow& a, const RawRow& b) {
    if (a.cell_index != b.cell_index) return a.cell_index < b.cell_index;
    return std::stoull(a.fields[ncell]) < std::stoull(b.fields[ncell]);
  });
  std::sort(result.warnings.begin(), result.warnings.end(), [&](const Warning& a, const Warning& b) {
    const auto ia = cell_index.at(a.cell), ib = cell_index.at(b.cell);
    return ia != ib ? ia < ib : a.replicate < b.replicate;
  });

  {
    const fs::path tmp = out_dir / "raw.csv.tmp";
    std::ofstream out(tmp, std::ios::trunc);
    out << schema.version_line("raw") << '\n' << join_csv(schema.columns()) << '\n';
    for (const auto& r : result.rows) out << join_csv(r.fields) << '\n';
    out.close();
    fs::rename(tmp, raw_path);
  }
  {
    std::ofstream out(out_dir / "warnings.csv", std::ios::trunc);
    out << schema.version_line("warnings") << '\n';
    auto cols = schema.cell_columns;
    cols.push_back("replicate");
    cols.push_back("message");
    out << join_csv(cols) << '\n';
    for (const auto& w : result.warnings) {
      auto f = w.cell;
      f.push_back(std::to_string(w.replicate));
      f.push_back(w.message);
      out << join_csv(f) << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregateRecord {
  std::vector<std::string> cell;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0, min = 0.0, max = 0.0, ci_half_width = 0.0;
};

/// Per cell and metric: mean, min, max and 95% t half-width over the
/// non-missing values. Cells keep first-appearance order of `rows`.
inline std::vector<AggregateRecord> aggregate(const RawSchema& schema, const std::vector<std::vector<std::string>>& rows) {
  const std::size_t ncell = schema.cell_columns.size();
  const std::size_t first_metric = ncell + 2;
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<std::vector<double>>> values;
  for (const auto& f : rows) {
    std::vector<std::string> cell(f.begin(), f.begin() + static_cast<long>(ncell));
    auto [it, fresh] = values.try_emplace(cell, schema.metric_columns.size());
    if (fresh) order.push_back(cell);
    for (std::size_t m = 0; m < schema.metric_columns.size(); ++m)
      if (!f[first_metric + m].empty()) it->second[m].push_back(parse_double(f[first_metric + m]));
  }
  std::vector<AggregateRecord> out;
  for (const auto& cell : order) {
    const auto& per_metric = values.at(cell);
    for (std::size_t m = 0; m < per_metric.size(); ++m) {
      const auto& xs = per_metric[m];
      AggregateRecord r{cell, schema.metric_columns[m], xs.size()};
      if (!xs.empty()) {
        r.mean = stats::mean(xs);
        r.min = *std::min_element(xs.begin(), xs.end());
        r.max = *std::max_element(xs.begin(), xs.end());
        if (xs.size() >= 2) r.ci_half_width = stats::confidence_interval_95(xs).half_width;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline std::vector<std::vector<std::string>> row_fields(const std::vector<RawRow>& rows) {
  std::vector<std::vector<std::string>> f;
  f.reserve(rows.size());
  for (const auto& r : rows) f.push_back(r.fields);
  return f;
}

inline void write_aggregate(const fs::path& path, const RawSchema& schema, const std::vector<AggregateRecord>& recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << schema.version_line("aggregate") << '\n';
  auto cols = schema.cell_columns;
  for (const char* c : {"metric", "n", "mean", "min", "max", "ci95_half_width"}) cols.push_back(c);
  out << join_csv(cols) << '\n';
  for (const auto& r : recs) {
    auto f = r.cell;
    f.push_back(r.metric);
    f.push_back(std::to_string(r.n));
    if (r.n == 0) {
      f.insert(f.end(), {"", "", "", ""});
    } else {
      for (double v : {r.mean, r.min, r.max, r.ci_half_width}) f.push_back(fmt_double(v));
    }
    out << join_csv(f) << '\n';
  }
}

/// Re-aggregates an existing raw.csv into aggregate.csv.
inline std::vector<AggregateRecord> reaggregate(const fs::path& out_dir, const RawSchema& schema) {
  const auto rows = read_raw(out_dir / "raw.csv", schema);
  auto recs = aggregate(schema, rows);
  write_aggregate(out_dir / "aggregate.csv", schema, recs);
  return recs;
}

// ---------------------------------------------------------------------------
// NK grids

inline RawSchema nk_schema(Kind kind) {
  return {to_string(kind),
          {"n", "k", "g", "p_delete"},
          {"final_fitness", "final_length", "walk_length", "length_stop_generation", "last_accepted_generation",
           "growth_generation_1", "growth_generation_2", "growth_generation_3"}};
}

inline std::vector<std::string> nk_cell_fields(const NkCell& c) {
  return {std::to_string(c.n), std::to_string(c.k), std::to_string(c.g), fmt_double(c.p_delete)};
}

struct GridOutput {
  RawSchema schema;
  RunResult run;
  std::vector<AggregateRecord> aggregates;
};

/// Number of replicate executions a grid plans (for --dry-run).
inline std::size_t planned_replicates(const NkGrid& g) { return expand(g).size() * g.replicates(); }
inline std::size_t planned_replicates(const GaGrid& g) { return g.arms().size() * g.runs; }

inline GridOutput run_nk_grid(const NkGrid& grid, const fs::path& out_dir, const RunOptions& opt = {}) {
  grid.validate();
  GridOutput out{nk_schema(grid.kind), {}, {}};
  std::vector<std::vector<std::string>> order;
  std::vector<Task> tasks;
  for (const NkCell& cell : expand(grid)) {
    const auto fields = nk_cell_fields(cell);
    order.push_back(fields);
    for (std::size_t l = 0; l < grid.landscapes; ++l)
      for (std::size_t s = 0; s < grid.starts; ++s) {
        Task t;
        t.cell = fields;
        t.replicate = l * grid.starts + s;
        t.seed = walk_seed(grid.master_seed, cell, l, s);
        const std::uint64_t lseed = landscape_seed(grid.master_seed, cell, l);
        t.run = [kind = grid.kind, cell, gens = grid.generations, lseed, wseed = t.seed] {
          auto cfg = walk_config(kind, cell, gens, wseed);
          cfg.record_series = false;
          const WalkTrace tr = run_walk(NkLandscape::generate(cell.n, cell.k, lseed), cfg);
          std::vector<std::string> m{fmt_double(tr.final_fitness), std::to_string(tr.final_length),
                                     std::to_string(tr.walk_length_to_optimum),
                                     std::to_string(tr.length_stop_generation),
                                     std::to_string(tr.last_accepted_generation)};
          for (std::size_t j = 0; j < 3; ++j)
            m.push_back(j < tr.accepted_growth_generations.size() ? std::to_string(tr.accepted_growth_generations[j])
                                                                  : std::string{});
          return m;
        };
        tasks.push_back(std::move(t));
      }
  }
  out.run = run_tasks(out.schema, order, std::move(tasks), out_dir, opt);
  out.aggregates = aggregate(out.schema, row_fields(out.run.rows));
  write_aggregate(out_dir / "aggregate.csv", out.schema, out.aggregates);
  return out;
}

// ---------------------------------------------------------------------------
// GA grids

inline RawSchema ga_schema(Kind kind) {
  return {to_string(kind),
          {"types_added", "p_add_type"},
          {"initial_best_fitness", "initial_mean_fitness", "final_best_fitness", "final_mean_fitness",
           "final_best_type_count", "evaluations", "initial_evaluations"}};
}

inline tumor::SimState load_or_grow_tumor(const GaGrid& grid) {
  if (!grid.tumor_fixture.empty()) return tumor::load_state_file(grid.tumor_fixture);
  return tumor::grow_tumor(grid.sim, grid.grow_days, grid.grow_seed);
}

inline fs::path trace_path(const fs::path& out_dir, std::size_t types_added, std::size_t run) {
  return out_dir / "traces" / ("ga_add" + std::to_string(types_added) + "_run" + std::to_string(run) + ".csv");
}

/// Runs every (arm, run) pair. All arms of run r start from the same
/// initial population and share the GA seed; the population is evaluated
/// once per run and its cost reported in initial_evaluations.
inline GridOutput run_ga_grid(const GaGrid& grid, const fs::path& out_dir, const RunOptions& opt = {},
                              ga::Evaluator evaluator = {}) {
  grid.validate();
  GridOutput out{ga_schema(grid.kind), {}, {}};
  fs::create_directories(out_dir / "traces");
  std::optional<tumor::SimState> tumor;
  if (!evaluator) {
    tumor = load_or_grow_tumor(grid);
    evaluator = ga::tumor_evaluator(*tumor, grid.sim, grid.treatment_days);
  }

  std::mutex init_mu;
  std::map<std::size_t, std::shared_ptr<const std::vector<ga::Individual>>> initial_cache;
  auto initial_for = [&](std::size_t run) {
    {
      std::lock_guard lock(init_mu);
      if (auto it = initial_cache.find(run); it != initial_cache.end()) return it->second;
    }
    auto pop = std::make_shared<const std::vector<ga::Individual>>(
        ga::initial_population(evaluator, grid.base, ga_initial_seed(grid.master_seed, run)));
    std::lock_guard lock(init_mu);
    return initial_cache.emplace(run, std::move(pop)).first->second;
  };

  std::vector<std::vector<std::string>> order;
  std::vector<Task> tasks;
  for (const GaArm& arm : grid.arms()) {
    const std::vector<std::string> fields{std::to_string(arm.types_added), fmt_double(arm.p_add)};
    order.push_back(fields);
    for (std::size_t r = 0; r < grid.runs; ++r) {
      Task t;
      t.cell = fields;
      t.replicate = r;
      t.seed = ga_run_seed(grid.master_seed, r);
      t.run = [&, arm, r, seed = t.seed] {
        ga::GaConfig cfg = grid.base;
        cfg.p_add_type = arm.p_add;
        cfg.types_added_per_event = std::max<std::size_t>(1, arm.types_added);
        cfg.seed = seed;
        const auto init = initial_for(r);
        ga::GaTrace trace = ga::run_ga(evaluator, cfg, *init);
        trace.initial_evaluations = cfg.initialization_cost();
        {
          std::ofstream os(trace_path(out_dir, arm.types_added, r), std::ios::trunc);
          ga::write_trace_csv(os, trace);
        }
        const auto& first = trace.generations.front();
        const auto& last = trace.last();
        return std::vector<std::string>{fmt_double(first.best_fitness),       fmt_double(first.mean_fitness),
                                        fmt_double(last.best_fitness),        fmt_double(last.mean_fitness),
                                        std::to_string(last.best_type_count), std::to_string(trace.evaluations),
                                        std::to_string(trace.initial_evaluations)};
      };
      tasks.push_back(std::move(t));
    }
  }
  out.run = run_tasks(out.schema, order, std::move(tasks), out_dir, opt);
  out.aggregates = aggregate(out.schema, row_fields(out.run.rows));
  write_aggregate(out_dir / "aggregate.csv", out.schema, out.aggregates);
  return out;
}

/// Per-generation curve of one arm averaged over runs.
struct CurvePoint {
  std::size_t generation = 0;
  stats::ConfidenceInterval best{0.0, 0.0};
  stats::ConfidenceInterval mean{0.0, 0.0};
  double best_type_count = 0.0;
  std::vector<double> type_share;  // population share of k-type individuals, index k-1
};

struct GaTraceRow {
  std::size_t generation;
  double mean_fitness, best_fitness;
  std::size_t best_type_count;
  std::vector<std::uint32_t> histogram;
};

inline std::vector<GaTraceRow> read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<GaTraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw std::runtime_error("malformed trace row in " + path.string());
    GaTraceRow r{std::stoul(f[0]), parse_double(f[1]), parse_double(f[2]), std::stoul(f[3]), {}};
    std::stringstream hs(f[4]);
    std::string h;
    while (std::getline(hs, h, ';')) r.histogram.push_back(static_cast<std::uint32_t>(std::stoul(h)));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<CurvePoint> ga_curve(const fs::path& out_dir, std::size_t types_added, std::size_t runs) {
  std::vector<std::vector<GaTraceRow>> traces;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto p = trace_path(out_dir, types_added, r);
    if (fs::exists(p)) traces.push_back(read_trace_csv(p));
  }
  std::vector<CurvePoint> curve;
  if (traces.empty()) return curve;
  std::size_t len = traces[0].size();
  for (const auto& t : traces) len = std::min(len, t.size());
  for (std::size_t g = 0; g < len; ++g) {
    std::vector<double> best, mean;
    double types = 0.0;
    std::vector<double> share(traces[0][g].histogram.size(), 0.0);
    for (const auto& t : traces) {
      best.push_back(t[g].best_fitness);
      mean.push_back(t[g].mean_fitness);
      types += static_cast<double>(t[g].best_type_count);
      double total = 0.0;
      for (auto c : t[g].histogram) total += c;
      for (std::size_t k = 0; k < share.size() && k < t[g].histogram.size(); ++k)
        share[k] += total > 0.0 ? t[g].histogram[k] / total : 0.0;
    }
    const auto nt = static_cast<double>(traces.size());
    for (auto& s : share) s /= nt;
    CurvePoint p;
    p.generation = traces[0][g].generation;
    p.best = best.size() >= 2 ? stats::confidence_interval_95(best) : stats::ConfidenceInterval{best[0], 0.0};
    p.mean = mean.size() >= 2 ? stats::confidence_interval_95(mean) : stats::ConfidenceInterval{mean[0], 0.0};
    p.best_type_count = types / nt;
    p.type_share = std::move(share);
    curve.push_back(std::move(p));
  }
  return curve;
}

inline void write_curves_csv(const fs::path& path, const std::vector<std::pair<std::size_t, std::vector<CurvePoint>>>& arms) {
  std::ofstream out(path, std::ios::trunc);
  out << "# varlen curves v" << kCsvVersion << '\n';
  out << "types_added,generation,best_mean,best_ci95,mean_mean,mean_ci95,best_type_count,type_share\n";
  for (const auto& [arm, curve] : arms)
    for (const auto& p : curve) {
      out << arm << ',' << p.generation << ',' << fmt_double(p.best.mean) << ',' << fmt_double(p.best.half_width) << ','
          << fmt_double(p.mean.mean) << ',' << fmt_double(p.mean.half_width) << ',' << fmt_double(p.best_type_count)
          << ',';
      for (std::size_t k = 0; k < p.type_share.size(); ++k) out << (k ? ";" : "") << fmt_double(p.type_share[k]);
      out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Lookups used by assertions over named cells

/// Metric values of one cell, in replicate order; missing values skipped.
inline std::vector<double> cell_values(const GridOutput& g, const std::vector<std::string>& cell, const std::string& metric) {
  const auto& cols = g.schema.metric_columns;
  const auto it = std::find(cols.begin(), cols.end(), metric);
  if (it == cols.end()) throw std::invalid_argument("unknown metric " + metric);
  const std::size_t col = g.schema.cell_columns.size() + 2 + static_cast<std::size_t>(it - cols.begin());
  std::vector<double> xs;
  for (const auto& r : g.run.rows) {
    if (!std::equal(cell.begin(), cell.end(), r.fields.begin())) continue;
    if (!r.fields[col].empty()) xs.push_back(parse_double(r.fields[col]));
  }
  return xs;
}

inline std::vector<double> nk_values(const GridOutput& g, const NkCell& cell, const std::string& metric) {
  return cell_values(g, nk_cell_fields(cell), metric);
}

}  // namespace varlen::exp
