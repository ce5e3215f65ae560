#pragma once

// Two-dimensional agent-based tumour / nanoparticle treatment analogue.
//
// Cancer cells sit in an oxygen field on a regular grid. A treatment injects
// cargo agents (drug) and worker agents (nanoparticles) on a ring outside the
// tumour. Unattached workers climb the oxygen gradient to find cargo, attached
// workers descend it toward the hypoxic core, and cargo is released once its
// local oxygen drops below the release threshold. Deposited cargo damages
// and kills nearby cells. Fitness is the number of live cancer cells left.
//
// One call to step() advances the clock by dt and runs, in this order:
//   1. oxygen diffusion/uptake (explicit, one update of length dt)
//   2. mechanics substeps of length <= mechanics_dt, each doing worker and
//      carried-cargo motility and forces, then attachment and release
//   3. cargo/worker apoptosis, cell damage, repair and death
//   4. cell division into free space
// Cells and agents draw from separate generators so agent behaviour never
// shifts the cell-level random stream.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "varlen/binary_io.hpp"
#include "varlen/random.hpp"

namespace varlen::tumor {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  double norm() const { return std::sqrt(x * x + y * y); }
  bool operator==(const Vec2&) const = default;
};

// ---------------------------------------------------------------------------
// Treatment design

struct ParamRange {
  double lo;
  double hi;
  double span() const { return hi - lo; }
};

/// One nanoparticle (worker) type.
struct NpDesign {
  double attached_migration_bias = 0.5;    // [0,1]
  double unattached_migration_bias = 0.5;  // [0,1]
  double relative_adhesion = 1.0;          // [0,10]
  double relative_repulsion = 1.0;         // [0,10]
  double persistence_time = 5.0;           // minutes, [0,10]

  static constexpr std::size_t kParamCount = 5;
  static constexpr std::array<ParamRange, kParamCount> kRanges{
      {{0.0, 1.0}, {0.0, 1.0}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}}};
  static constexpr std::array<std::string_view, kParamCount> kNames{
      "attached_migration_bias", "unattached_migration_bias", "relative_adhesion",
      "relative_repulsion", "persistence_time"};

  double& param(std::size_t i) {
    switch (i) {
      case 0: return attached_migration_bias;
      case 1: return unattached_migration_bias;
      case 2: return relative_adhesion;
      case 3: return relative_repulsion;
      case 4: return persistence_time;
    }
    throw std::out_of_range("NpDesign parameter index");
  }
  double param(std::size_t i) const { return const_cast<NpDesign*>(this)->param(i); }

  bool in_bounds() const {
    for (std::size_t i = 0; i < kParamCount; ++i)
      if (!(param(i) >= kRanges[i].lo && param(i) <= kRanges[i].hi)) return false;
    return true;
  }

  static NpDesign random(Rng& rng) {
    NpDesign d;
    for (std::size_t i = 0; i < kParamCount; ++i) d.param(i) = rng.uniform(kRanges[i].lo, kRanges[i].hi);
    return d;
  }

  bool operator==(const NpDesign&) const = default;
};

inline constexpr std::size_t kMaxTypes = 10;
inline constexpr std::size_t kTotalWorkers = 50;

/// Splits `total` workers over `types`; earlier types take the remainder.
inline std::vector<std::uint32_t> split_workers(std::size_t total, std::size_t types) {
  if (types == 0) throw std::invalid_argument("split_workers: no types");
  std::vector<std::uint32_t> counts(types, static_cast<std::uint32_t>(total / types));
  for (std::size_t i = 0; i < total % types; ++i) ++counts[i];
  return counts;
}

struct Treatment {
  std::vector<NpDesign> np_types;
  std::vector<std::uint32_t> worker_counts;

  Treatment() = default;
  explicit Treatment(std::vector<NpDesign> types) : np_types(std::move(types)) { rebalance(); }

  std::size_t type_count() const noexcept { return np_types.size(); }

  void rebalance() { worker_counts = split_workers(kTotalWorkers, np_types.size()); }

  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const {
    if (np_types.empty() || np_types.size() > kMaxTypes)
      throw std::invalid_argument("treatment must have 1.." + std::to_string(kMaxTypes) + " NP types");
    for (const auto& d : np_types)
      if (!d.in_bounds()) throw std::invalid_argument("NP design parameter out of range");
    if (worker_counts != split_workers(kTotalWorkers, np_types.size()))
      throw std::invalid_argument("worker counts must split 50 workers evenly, remainder to earlier types");
  }

  bool operator==(const Treatment&) const = default;
};

// ---------------------------------------------------------------------------
// Parameters

struct SimParams {
  // Unaltered simulator parameters (rates per minute, lengths in micrometres).
  double damage_rate = 0.03333;
  double repair_rate = 0.004167;
  double drug_death_rate = 0.004167;
  double elastic_coefficient = 0.05;
  double cargo_o2_relative_uptake = 0.1;
  double cargo_apoptosis_rate = 4.065e-5;
  double cargo_relative_adhesion = 0.0;
  double cargo_relative_repulsion = 5.0;
  double cargo_release_o2_threshold = 10.0;  // mmHg
  double max_relative_adhesion_distance = 1.25;
  double max_elastic_displacement = 50.0;
  double max_attachment_distance = 18.0;
  double min_attachment_distance = 14.0;
  double motility_shutdown_threshold = 0.001;
  double attachment_receptor_threshold = 0.1;
  double worker_speed = 2.0;
  double worker_apoptosis_rate = 0.0;
  double worker_o2_relative_uptake = 0.1;

  // Analogue-only values.
  double dt = 6.0;                 // step length, minutes
  double mechanics_dt = 2.0;       // mechanics substep, minutes
  double domain_size = 1500.0;     // square side, centred on the origin
  double voxel_size = 20.0;
  double o2_boundary = 38.0;       // mmHg, Dirichlet far field
  double o2_diffusion = 12.0;      // um^2/min
  double o2_supply_rate = 0.0012;  // 1/min, relaxation toward the far field
  double cell_o2_uptake = 0.003;   // 1/min per cell in a voxel
  double cell_radius = 8.4;
  double agent_radius = 8.4;
  double cell_repulsion = 10.0;    // um/min
  double cell_adhesion = 0.4;      // um/min
  double proliferation_rate = 1.0 / 2000.0;
  double proliferation_o2_threshold = 15.0;
  std::size_t division_attempts = 6;
  double daughter_min_gap = 0.9;   // fraction of a cell diameter
  double initial_radius = 200.0;
  double initial_spacing_factor = 1.9;  // hex lattice spacing / cell radius
  double injection_ring_offset = 100.0;
  double injection_band_width = 60.0;
  std::size_t cargo_count = 450;
  std::size_t worker_count = kTotalWorkers;

  void validate() const {
    const std::pair<const char*, double> nonneg[] = {
        {"damage_rate", damage_rate}, {"repair_rate", repair_rate},
        {"drug_death_rate", drug_death_rate}, {"elastic_coefficient", elastic_coefficient},
        {"cargo_o2_relative_uptake", cargo_o2_relative_uptake},
        {"cargo_apoptosis_rate", cargo_apoptosis_rate}, {"worker_apoptosis_rate", worker_apoptosis_rate},
        {"worker_o2_relative_uptake", worker_o2_relative_uptake}, {"worker_speed", worker_speed},
        {"o2_diffusion", o2_diffusion}, {"o2_supply_rate", o2_supply_rate}, {"cell_o2_uptake", cell_o2_uptake},
        {"proliferation_rate", proliferation_rate}, {"cell_repulsion", cell_repulsion},
        {"cell_adhesion", cell_adhesion}};
    for (const auto& [name, v] : nonneg)
      if (!(v >= 0.0)) throw std::invalid_argument(std::string(name) + " must be >= 0");
    if (!(min_attachment_distance < max_attachment_distance))
      throw std::invalid_argument("min_attachment_distance must be below max_attachment_distance");
    if (!(dt > 0.0) || !(mechanics_dt > 0.0)) throw std::invalid_argument("time steps must be positive");
    if (!(voxel_size > 0.0) || !(domain_size >= voxel_size))
      throw std::invalid_argument("domain must hold at least one voxel");
  }
};

// ---------------------------------------------------------------------------
// State

struct CancerCell {
  Vec2 pos;
  double damage = 0.0;
  bool alive = true;
  bool operator==(const CancerCell&) const = default;
};

struct Worker {
  Vec2 pos;
  Vec2 heading;           // unit motility direction, zero when not yet drawn
  std::uint32_t type = 0;
  std::int32_t cargo = -1;  // index of attached cargo
  bool alive = true;
  bool operator==(const Worker&) const = default;
};

enum class CargoState : std::uint8_t { kFree = 0, kCarried = 1, kDeposited = 2, kDead = 3 };

struct Cargo {
  Vec2 pos;
  double receptor = 1.0;
  CargoState state = CargoState::kFree;
  std::int32_t worker = -1;
  bool operator==(const Cargo&) const = default;
};

struct OxygenField {
  std::size_t n = 0;      // voxels per side
  double origin = 0.0;    // coordinate of the domain's lower edge
  double h = 0.0;         // voxel size
  std::vector<double> values;

  std::size_t voxel_of(Vec2 p) const {
    auto clampi = [&](double c) {
      const auto i = static_cast<long>(std::floor((c - origin) / h));
      return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
    };
    return clampi(p.y) * n + clampi(p.x);
  }

  double at(Vec2 p) const { return values[voxel_of(p)]; }

  bool operator==(const OxygenField&) const = default;
};

struct SimState {
  std::vector<CancerCell> cells;
  std::vector<Worker> workers;
  std::vector<Cargo> cargo;
  std::vector<NpDesign> designs;  // worker type table
  OxygenField oxygen;
  double clock = 0.0;  // minutes

  std::size_t live_cells() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CancerCell& c) { return c.alive; }));
  }
  std::size_t deposited_cargo() const {
    return static_cast<std::size_t>(
        std::count_if(cargo.begin(), cargo.end(), [](const Cargo& c) { return c.state == CargoState::kDeposited; }));
  }

  bool operator==(const SimState&) const = default;
};

struct StepCounters {
  std::size_t births = 0;
  std::size_t damage_deaths = 0;
  std::size_t drug_deaths = 0;
  std::size_t attachments = 0;
  std::size_t releases = 0;
};

struct SimRngs {
  Rng cells;
  Rng agents;
  explicit SimRngs(std::uint64_t seed) : cells(derive_seed({seed, 1})), agents(derive_seed({seed, 2})) {}
};

inline OxygenField make_oxygen_field(const SimParams& p) {
  OxygenField f;
  f.n = static_cast<std::size_t>(std::ceil(p.domain_size / p.voxel_size));
  f.h = p.voxel_size;
  f.origin = -0.5 * static_cast<double>(f.n) * f.h;
  f.values.assign(f.n * f.n, p.o2_boundary);
  return f;
}

namespace detail {

/// Uniform bucket grid in compressed-row form.
class BinGrid {
 public:
  BinGrid() = default;
  BinGrid(double origin, double extent, double bin) { reset(origin, extent, bin); }

  void reset(double origin, double extent, double bin) {
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent / bin)));
    if (origin == origin_ && bin == bin_ && n == n_ && start_.size() == n * n + 1) return;
    origin_ = origin;
    bin_ = bin;
    n_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(extent / bin)));
    start_.assign(n_ * n_ + 1, 0);
  }

  template <class PosFn, class KeepFn>
  void rebuild(std::size_t count, PosFn pos, KeepFn keep) {
    std::fill(start_.begin(), start_.end(), 0);
    bin_of_.assign(count, kNone);
    for (std::size_t i = 0; i < count; ++i) {
      if (!keep(i)) continue;
      bin_of_[i] = bin_index(pos(i));
      ++start_[bin_of_[i] + 1];
    }
    for (std::size_t b = 0; b < n_ * n_; ++b) start_[b + 1] += start_[b];
    items_.resize(start_.back());
    fill_.assign(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < count; ++i)
      if (bin_of_[i] != kNone) items_[fill_[bin_of_[i]]++] = static_cast<std::uint32_t>(i);
  }

  /// Calls fn(index) for items in bins overlapping the square of half-size r.
  template <class Fn>
  void for_near(Vec2 p, double r, Fn fn) const {
    const long lo_x = cell_coord(p.x - r), hi_x = cell_coord(p.x + r);
    const long lo_y = cell_coord(p.y - r), hi_y = cell_coord(p.y + r);
    for (long by = lo_y; by <= hi_y; ++by)
      for (long bx = lo_x; bx <= hi_x; ++bx) {
        const std::size_t b = static_cast<std::size_t>(by) * n_ + static_cast<std::size_t>(bx);
        for (std::uint32_t k = start_[b]; k < start_[b + 1]; ++k) fn(items_[k]);
      }
  }

 private:
  static constexpr std::uint32_t kNone = ~std::uint32_t{0};

  long cell_coord(double c) const {
    const auto i = static_cast<long>(std::floor((c - origin_) / bin_));
    return std::clamp<long>(i, 0, static_cast<long>(n_) - 1);
  }
  std::uint32_t bin_index(Vec2 p) const {
    return static_cast<std::uint32_t>(cell_coord(p.y) * static_cast<long>(n_) + cell_coord(p.x));
  }

  double origin_ = 0.0;
  double bin_ = 1.0;
  std::size_t n_ = 1;
  std::vector<std::uint32_t> start_;
  std::vector<std::uint32_t> items_;
  std::vector<std::uint32_t> bin_of_;
  std::vector<std::uint32_t> fill_;
};

/// Overdamped pair velocity magnitude (positive pushes apart).
inline double pair_speed(double d, double contact, double rel_distance, double repulsion, double adhesion) {
  double v = 0.0;
  if (d < contact) {
    const double t = 1.0 - d / contact;
    v += repulsion * t * t;
  }
  const double reach = rel_distance * contact;
  if (d < reach && adhesion > 0.0) {
    const double t = 1.0 - d / reach;
    v -= adhesion * t * t;
  }
  return v;
}

inline Vec2 unit_or_zero(Vec2 v) {
  const double n = v.norm();
  return n > 0.0 ? (1.0 / n) * v : Vec2{};
}

inline Vec2 random_unit(Rng& rng) {
  const double a = 2.0 * std::numbers::pi * rng.uniform01();
  return {std::cos(a), std::sin(a)};
}

inline Vec2 clamp_to_domain(Vec2 p, const OxygenField& f) {
  const double lo = f.origin, hi = f.origin + static_cast<double>(f.n) * f.h;
  return {std::clamp(p.x, lo, hi), std::clamp(p.y, lo, hi)};
}

inline Vec2 clamp_length(Vec2 v, double max_len) {
  const double n = v.norm();
  return n > max_len ? (max_len / n) * v : v;
}

/// Central-difference gradient at the voxel holding p; the far field acts
/// as a ghost layer.
inline Vec2 oxygen_gradient(const OxygenField& f, double boundary, Vec2 p) {
  const std::size_t v = f.voxel_of(p);
  const std::size_t ix = v % f.n, iy = v / f.n;
  auto val = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(f.n) || y >= static_cast<long>(f.n)) return boundary;
    return f.values[static_cast<std::size_t>(y) * f.n + static_cast<std::size_t>(x)];
  };
  const auto x = static_cast<long>(ix), y = static_cast<long>(iy);
  return {(val(x + 1, y) - val(x - 1, y)) / (2.0 * f.h), (val(x, y + 1) - val(x, y - 1)) / (2.0 * f.h)};
}

}  // namespace detail

/// Largest dt accepted by the explicit diffusion update.
inline double diffusion_dt_limit(const SimParams& p) { return 0.25 * p.voxel_size * p.voxel_size / p.o2_diffusion; }

/// Advances the state by dt minutes. Throws std::invalid_argument when dt
/// exceeds the diffusion stability bound.
inline StepCounters step(SimState& s, const SimParams& p, double dt, SimRngs& rngs) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  if (p.o2_diffusion > 0.0 && dt > diffusion_dt_limit(p))
    throw std::invalid_argument("step: dt " + std::to_string(dt) + " exceeds diffusion stability bound " +
                                std::to_string(diffusion_dt_limit(p)));
  StepCounters out;
  OxygenField& o2 = s.oxygen;
  const std::size_t n = o2.n;

  // 1. Oxygen. Diffusion is explicit; uptake and supply are treated
  // implicitly so the field stays within [0, far field].
  {
    thread_local std::vector<double> sink, next;
    sink.assign(n * n, p.o2_supply_rate);
    next.resize(n * n);
    for (const auto& c : s.cells)
      if (c.alive) sink[o2.voxel_of(c.pos)] += p.cell_o2_uptake;
    for (const auto& w : s.workers)
      if (w.alive) sink[o2.voxel_of(w.pos)] += p.cell_o2_uptake * p.worker_o2_relative_uptake;
    for (const auto& c : s.cargo)
      if (c.state != CargoState::kDead) sink[o2.voxel_of(c.pos)] += p.cell_o2_uptake * p.cargo_o2_relative_uptake;
    const double r = p.o2_diffusion * dt / (p.voxel_size * p.voxel_size);
    const double supply = dt * p.o2_supply_rate * p.o2_boundary;
    const auto& cur = o2.values;
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const std::size_t v = y * n + x;
        const double left = x > 0 ? cur[v - 1] : p.o2_boundary;
        const double right = x + 1 < n ? cur[v + 1] : p.o2_boundary;
        const double down = y > 0 ? cur[v - n] : p.o2_boundary;
        const double up = y + 1 < n ? cur[v + n] : p.o2_boundary;
        const double lap = left + right + down + up - 4.0 * cur[v];
        next[v] = std::max(0.0, (cur[v] + r * lap + supply) / (1.0 + dt * sink[v]));
      }
    }
    o2.values.swap(next);
  }

  const double domain_extent = static_cast<double>(n) * o2.h;
  const double cell_contact = 2.0 * p.cell_radius;
  const double agent_cell_contact = p.cell_radius + p.agent_radius;
  const double reach = p.max_relative_adhesion_distance * std::max(cell_contact, agent_cell_contact);
  thread_local detail::BinGrid cell_bins;
  cell_bins.reset(o2.origin, domain_extent, reach);
  auto rebuild_cells = [&] {
    cell_bins.rebuild(s.cells.size(), [&](std::size_t i) { return s.cells[i].pos; },
                      [&](std::size_t i) { return s.cells[i].alive; });
  };
  rebuild_cells();

  // 2. Agent mechanics substeps.
  if (!s.workers.empty()) {
    const auto substeps = static_cast<std::size_t>(std::ceil(dt / p.mechanics_dt - 1e-9));
    const double mdt = dt / static_cast<double>(substeps);
    thread_local detail::BinGrid free_bins;
    free_bins.reset(o2.origin, domain_extent, std::max(30.0, p.max_attachment_distance));
    auto rebuild_free = [&] {
      free_bins.rebuild(s.cargo.size(), [&](std::size_t i) { return s.cargo[i].pos; },
                        [&](std::size_t i) {
                          return s.cargo[i].state == CargoState::kFree &&
                                 s.cargo[i].receptor > p.attachment_receptor_threshold;
                        });
    };
    rebuild_free();
    thread_local std::vector<Vec2> worker_v, cargo_v;
    thread_local std::vector<std::pair<std::uint32_t, Vec2>> cell_push;
    worker_v.assign(s.workers.size(), Vec2{});
    cargo_v.assign(s.cargo.size(), Vec2{});

    for (std::size_t sub = 0; sub < substeps; ++sub) {
      cell_push.clear();
      auto push_against_cells = [&](Vec2 pos, double rel_rep, double rel_adh, Vec2& v) {
        const double rep = p.cell_repulsion * std::sqrt(rel_rep);
        const double adh = p.cell_adhesion * std::sqrt(rel_adh);
        if (rep == 0.0 && adh == 0.0) return;
        cell_bins.for_near(pos, reach, [&](std::uint32_t ci) {
          const Vec2 d = pos - s.cells[ci].pos;
          const double dist = d.norm();
          if (dist <= 0.0 || dist >= reach) return;
          const double sp = detail::pair_speed(dist, agent_cell_contact, p.max_relative_adhesion_distance, rep, adh);
          if (sp == 0.0) return;
          const Vec2 f = (sp / dist) * d;
          v += f;
          cell_push.emplace_back(ci, Vec2{-f.x, -f.y});
        });
      };

      for (std::size_t wi = 0; wi < s.workers.size(); ++wi) {
        Worker& w = s.workers[wi];
        Vec2 v{};
        if (!w.alive) {
          worker_v[wi] = v;
          continue;
        }
        const NpDesign& d = s.designs[w.type];
        const bool carrying = w.cargo >= 0;
        const double redraw = d.persistence_time > 0.0 ? std::min(1.0, mdt / d.persistence_time) : 1.0;
        if (w.heading == Vec2{} || rngs.agents.uniform01() < redraw) {
          Vec2 grad = detail::oxygen_gradient(o2, p.o2_boundary, w.pos);
          if (grad.norm() < p.motility_shutdown_threshold) grad = {};
          const Vec2 bias_dir = carrying ? -1.0 * detail::unit_or_zero(grad) : detail::unit_or_zero(grad);
          const double bias = carrying ? d.attached_migration_bias : d.unattached_migration_bias;
          const Vec2 rnd = detail::random_unit(rngs.agents);
          Vec2 h = bias * bias_dir + (1.0 - bias) * rnd;
          if (h.norm() == 0.0) h = rnd;
          w.heading = detail::unit_or_zero(h);
        }
        v += p.worker_speed * w.heading;
        push_against_cells(w.pos, d.relative_repulsion, d.relative_adhesion, v);
        if (carrying) {
          const Cargo& c = s.cargo[static_cast<std::size_t>(w.cargo)];
          const Vec2 sep = c.pos - w.pos;
          v += p.elastic_coefficient * sep;
          const double dist = sep.norm();
          const double sp = detail::pair_speed(dist, 2.0 * p.agent_radius, 1.0,
                                               p.cell_repulsion * std::sqrt(d.relative_repulsion * p.cargo_relative_repulsion), 0.0);
          if (dist > 0.0 && sp != 0.0) v -= (sp / dist) * sep;
        }
        worker_v[wi] = v;
      }

      for (const Worker& w : s.workers) {
        if (w.cargo < 0) continue;
        const auto ci = static_cast<std::size_t>(w.cargo);
        Vec2 v = p.elastic_coefficient * (w.pos - s.cargo[ci].pos);
        push_against_cells(s.cargo[ci].pos, p.cargo_relative_repulsion, p.cargo_relative_adhesion, v);
        cargo_v[ci] = v;
      }

      const double max_move = 0.5 * p.cell_radius;
      for (std::size_t wi = 0; wi < s.workers.size(); ++wi)
        s.workers[wi].pos = detail::clamp_to_domain(s.workers[wi].pos + detail::clamp_length(mdt * worker_v[wi], max_move), o2);
      for (const Worker& w : s.workers) {
        if (w.cargo < 0) continue;
        Cargo& c = s.cargo[static_cast<std::size_t>(w.cargo)];
        c.pos = detail::clamp_to_domain(c.pos + detail::clamp_length(mdt * cargo_v[static_cast<std::size_t>(w.cargo)], max_move), o2);
      }
      // Cells moved by agents also feel repulsion from neighbouring cells,
      // so agents cannot pile cells on top of each other.
      std::sort(cell_push.begin(), cell_push.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t k = 0; k < cell_push.size();) {
        const std::uint32_t ci = cell_push[k].first;
        Vec2 v{};
        for (; k < cell_push.size() && cell_push[k].first == ci; ++k) v += cell_push[k].second;
        const Vec2 pos = s.cells[ci].pos;
        cell_bins.for_near(pos, cell_contact, [&](std::uint32_t j) {
          if (j == ci) return;
          const Vec2 d = pos - s.cells[j].pos;
          const double dist = d.norm();
          if (dist <= 0.0 || dist >= cell_contact) return;
          const double t = 1.0 - dist / cell_contact;
          v += (p.cell_repulsion * t * t / dist) * d;
        });
        s.cells[ci].pos = detail::clamp_to_domain(pos + detail::clamp_length(mdt * v, max_move), o2);
      }

      // Attachment and release.
      bool free_changed = false;
      for (Worker& w : s.workers) {
        if (w.cargo < 0) continue;
        Cargo& c = s.cargo[static_cast<std::size_t>(w.cargo)];
        const bool snapped = (w.pos - c.pos).norm() > p.max_elastic_displacement;
        const bool hypoxic = o2.at(c.pos) < p.cargo_release_o2_threshold;
        if (snapped || hypoxic) {
          w.cargo = -1;
          w.heading = {};
          c.worker = -1;
          if (hypoxic) {
            c.state = CargoState::kDeposited;
            c.receptor = 0.0;
            ++out.releases;
          } else {
            c.state = CargoState::kFree;
            free_changed = true;
          }
        }
      }
      if (free_changed) rebuild_free();
      for (std::size_t wi = 0; wi < s.workers.size(); ++wi) {
        Worker& w = s.workers[wi];
        if (!w.alive || w.cargo >= 0) continue;
        std::int32_t best = -1;
        double best_d = 0.0;
        free_bins.for_near(w.pos, p.max_attachment_distance, [&](std::uint32_t ci) {
          const Cargo& c = s.cargo[ci];
          if (c.state != CargoState::kFree) return;
          const double dist = (c.pos - w.pos).norm();
          if (dist < p.min_attachment_distance || dist > p.max_attachment_distance) return;
          if (best < 0 || dist < best_d) {
            best = static_cast<std::int32_t>(ci);
            best_d = dist;
          }
        });
        if (best >= 0) {
          Cargo& c = s.cargo[static_cast<std::size_t>(best)];
          c.state = CargoState::kCarried;
          c.worker = static_cast<std::int32_t>(wi);
          w.cargo = best;
          w.heading = {};
          ++out.attachments;
        }
      }
    }
    rebuild_cells();
  }

  // 3. Apoptosis of agents, cell damage and death.
  if (p.cargo_apoptosis_rate > 0.0) {
    const double pd = 1.0 - std::exp(-p.cargo_apoptosis_rate * dt);
    for (auto& c : s.cargo) {
      if (c.state == CargoState::kDead || !rngs.agents.bernoulli(pd)) continue;
      if (c.state == CargoState::kCarried) {
        Worker& w = s.workers[static_cast<std::size_t>(c.worker)];
        w.cargo = -1;
        w.heading = {};
      }
      c.state = CargoState::kDead;
      c.worker = -1;
    }
  }
  if (p.worker_apoptosis_rate > 0.0) {
    const double pd = 1.0 - std::exp(-p.worker_apoptosis_rate * dt);
    for (auto& w : s.workers) {
      if (!w.alive || !rngs.agents.bernoulli(pd)) continue;
      w.alive = false;
      if (w.cargo >= 0) {
        auto& c = s.cargo[static_cast<std::size_t>(w.cargo)];
        c.state = CargoState::kFree;
        c.worker = -1;
        w.cargo = -1;
      }
    }
  }
  {
    std::vector<std::uint16_t> contacts(s.cells.size(), 0);
    const double touch = p.max_relative_adhesion_distance * (p.cell_radius + p.agent_radius);
    for (const auto& c : s.cargo) {
      if (c.state != CargoState::kDeposited) continue;
      cell_bins.for_near(c.pos, touch, [&](std::uint32_t ci) {
        if ((s.cells[ci].pos - c.pos).norm() <= touch) ++contacts[ci];
      });
    }
    const double decay = std::exp(-p.repair_rate * dt);
    const double drug_p = 1.0 - std::exp(-p.drug_death_rate * dt);
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
      CancerCell& c = s.cells[i];
      if (!c.alive) continue;
      const double input = p.damage_rate * contacts[i];
      if (p.repair_rate > 0.0)
        c.damage = c.damage * decay + (input / p.repair_rate) * (1.0 - decay);
      else
        c.damage += input * dt;
      if (c.damage >= 1.0) {
        c.alive = false;
        ++out.damage_deaths;
      } else if (contacts[i] > 0 && rngs.cells.bernoulli(drug_p)) {
        c.alive = false;
        ++out.drug_deaths;
      }
    }
  }

  // 4. Division. A daughter is placed touching its parent at a random free
  // spot; a cell with no free spot after division_attempts tries stays
  // quiescent. Cells never push each other.
  {
    const double div_p = 1.0 - std::exp(-p.proliferation_rate * dt);
    const double min_gap = p.daughter_min_gap * cell_contact;
    const std::size_t existing = s.cells.size();
    const Vec2 lo{o2.origin, o2.origin};
    const double hi = o2.origin + domain_extent;
    for (std::size_t i = 0; i < existing; ++i) {
      if (!s.cells[i].alive || o2.at(s.cells[i].pos) < p.proliferation_o2_threshold) continue;
      if (!rngs.cells.bernoulli(div_p)) continue;
      for (std::size_t attempt = 0; attempt < p.division_attempts; ++attempt) {
        const Vec2 spot = s.cells[i].pos + cell_contact * detail::random_unit(rngs.cells);
        if (spot.x < lo.x || spot.y < lo.y || spot.x > hi || spot.y > hi) continue;
        bool free = true;
        cell_bins.for_near(spot, min_gap, [&](std::uint32_t j) {
          if ((s.cells[j].pos - spot).norm() < min_gap) free = false;
        });
        for (std::size_t j = existing; free && j < s.cells.size(); ++j)
          if ((s.cells[j].pos - spot).norm() < min_gap) free = false;
        if (!free) continue;
        s.cells.push_back({spot, 0.0, true});
        ++out.births;
        break;
      }
    }
  }

  s.clock += dt;
  return out;
}

/// Hexagonally packed disc of cells of the configured radius at the origin.
inline SimState initial_tumor(const SimParams& p) {
  SimState s;
  s.oxygen = make_oxygen_field(p);
  const double a = p.initial_spacing_factor * p.cell_radius;
  const double row = a * std::sqrt(3.0) / 2.0;
  const auto rows = static_cast<long>(std::ceil(p.initial_radius / row));
  for (long j = -rows; j <= rows; ++j) {
    const double y = static_cast<double>(j) * row;
    const double shift = (j % 2 == 0) ? 0.0 : 0.5 * a;
    const auto cols = static_cast<long>(std::ceil(p.initial_radius / a)) + 1;
    for (long i = -cols; i <= cols; ++i) {
      const Vec2 pos{static_cast<double>(i) * a + shift, y};
      if (pos.norm() <= p.initial_radius) s.cells.push_back({pos, 0.0, true});
    }
  }
  return s;
}

/// Grows the initial disc for `days` with no treatment present.
inline SimState grow_tumor(const SimParams& p, double days, std::uint64_t seed) {
  p.validate();
  if (days < 0.0) throw std::invalid_argument("grow_tumor: days must be nonnegative");
  SimState s = initial_tumor(p);
  SimRngs rngs(seed);
  const auto steps = static_cast<std::size_t>(std::llround(days * 1440.0 / p.dt));
  for (std::size_t i = 0; i < steps; ++i) step(s, p, p.dt, rngs);
  return s;
}

struct TreatmentOutcome {
  std::size_t remaining = 0;
  std::size_t deposited = 0;
  std::size_t births = 0;
  std::size_t damage_deaths = 0;
  std::size_t drug_deaths = 0;
};

/// Places cargo and workers in an annulus just outside the tumour. Worker
/// types are assigned in blocks following treatment.worker_counts.
inline void inject(SimState& s, const Treatment& t, const SimParams& p, Rng& rng) {
  Vec2 centre{};
  std::size_t live = 0;
  for (const auto& c : s.cells)
    if (c.alive) {
      centre += c.pos;
      ++live;
    }
  if (live > 0) centre = (1.0 / static_cast<double>(live)) * centre;
  double radius = 0.0;
  for (const auto& c : s.cells)
    if (c.alive) radius = std::max(radius, (c.pos - centre).norm());
  const double ring = radius + p.injection_ring_offset;
  auto place = [&] {
    const double a = 2.0 * std::numbers::pi * rng.uniform01();
    const double r = ring + p.injection_band_width * (rng.uniform01() - 0.5);
    return detail::clamp_to_domain(centre + Vec2{r * std::cos(a), r * std::sin(a)}, s.oxygen);
  };
  s.designs = t.np_types;
  for (std::size_t i = 0; i < p.cargo_count; ++i) s.cargo.push_back({place(), 1.0, CargoState::kFree, -1});
  const auto counts = split_workers(p.worker_count, t.type_count());
  for (std::uint32_t type = 0; type < counts.size(); ++type)
    for (std::uint32_t k = 0; k < counts[type]; ++k) s.workers.push_back({place(), {}, type, -1, true});
}

/// Injects `treatment` into a copy of `tumor` and simulates `days`.
inline TreatmentOutcome run_treatment(const SimState& tumor, const Treatment& treatment, const SimParams& p,
                                      double days, std::uint64_t seed, std::ostream* telemetry = nullptr) {
  p.validate();
  treatment.validate();
  if (days < 0.0) throw std::invalid_argument("apply_treatment: days must be nonnegative");
  SimState s = tumor;
  SimRngs rngs(seed);
  Rng placement(derive_seed({seed, 3}));
  inject(s, treatment, p, placement);
  TreatmentOutcome out;
  if (telemetry) *telemetry << "clock_min,live_cells,deposited_cargo\n";
  const auto steps = static_cast<std::size_t>(std::llround(days * 1440.0 / p.dt));
  for (std::size_t i = 0; i < steps; ++i) {
    const StepCounters c = step(s, p, p.dt, rngs);
    out.births += c.births;
    out.damage_deaths += c.damage_deaths;
    out.drug_deaths += c.drug_deaths;
    if (telemetry) *telemetry << s.clock << ',' << s.live_cells() << ',' << s.deposited_cargo() << '\n';
  }
  out.remaining = s.live_cells();
  out.deposited = s.deposited_cargo();
  return out;
}

/// Live cancer cells left after treating `tumor` for `days`.
inline std::size_t apply_treatment(const SimState& tumor, const Treatment& treatment, const SimParams& p, double days,
                                   std::uint64_t seed) {
  return run_treatment(tumor, treatment, p, days, seed).remaining;
}

/// Same clock and cell dynamics as a treatment run, with nothing injected.
inline std::size_t untreated_count(const SimState& tumor, const SimParams& p, double days, std::uint64_t seed) {
  p.validate();
  SimState s = tumor;
  SimRngs rngs(seed);
  const auto steps = static_cast<std::size_t>(std::llround(days * 1440.0 / p.dt));
  for (std::size_t i = 0; i < steps; ++i) step(s, p, p.dt, rngs);
  return s.live_cells();
}

// ---------------------------------------------------------------------------
// Serialization. Layout documented in docs/formats.md.

inline constexpr std::string_view kStateMagic = "VLTS";
inline constexpr std::uint32_t kStateVersion = 1;

inline void save_state(std::ostream& os, const SimState& s) {
  using namespace io;
  write_magic(os, kStateMagic, kStateVersion);
  write_f64(os, s.clock);
  write_u64(os, s.oxygen.n);
  write_f64(os, s.oxygen.origin);
  write_f64(os, s.oxygen.h);
  for (double v : s.oxygen.values) write_f64(os, v);
  write_u64(os, s.cells.size());
  for (const auto& c : s.cells) {
    write_f64(os, c.pos.x);
    write_f64(os, c.pos.y);
    write_f64(os, c.damage);
    write_u8(os, c.alive ? 1 : 0);
  }
  write_u64(os, s.designs.size());
  for (const auto& d : s.designs)
    for (std::size_t i = 0; i < NpDesign::kParamCount; ++i) write_f64(os, d.param(i));
  write_u64(os, s.workers.size());
  for (const auto& w : s.workers) {
    write_f64(os, w.pos.x);
    write_f64(os, w.pos.y);
    write_f64(os, w.heading.x);
    write_f64(os, w.heading.y);
    write_u32(os, w.type);
    write_u32(os, static_cast<std::uint32_t>(w.cargo));
    write_u8(os, w.alive ? 1 : 0);
  }
  write_u64(os, s.cargo.size());
  for (const auto& c : s.cargo) {
    write_f64(os, c.pos.x);
    write_f64(os, c.pos.y);
    write_f64(os, c.receptor);
    write_u8(os, static_cast<std::uint8_t>(c.state));
    write_u32(os, static_cast<std::uint32_t>(c.worker));
  }
  if (!os) throw std::runtime_error("failed writing simulation state");
}

inline SimState load_state(std::istream& is) {
  using namespace io;
  expect_magic(is, kStateMagic, kStateVersion);
  SimState s;
  s.clock = read_f64(is);
  s.oxygen.n = read_count(is, 1u << 14, "voxel");
  s.oxygen.origin = read_f64(is);
  s.oxygen.h = read_f64(is);
  s.oxygen.values.resize(s.oxygen.n * s.oxygen.n);
  for (auto& v : s.oxygen.values) v = read_f64(is);
  constexpr std::uint64_t kLimit = 1u << 24;
  s.cells.resize(read_count(is, kLimit, "cell"));
  for (auto& c : s.cells) {
    c.pos = {read_f64(is), read_f64(is)};
    c.damage = read_f64(is);
    const auto alive = read_u8(is);
    if (alive > 1) throw FormatError("bad cell flag");
    c.alive = alive == 1;
  }
  s.designs.resize(read_count(is, kMaxTypes, "design"));
  for (auto& d : s.designs)
    for (std::size_t i = 0; i < NpDesign::kParamCount; ++i) d.param(i) = read_f64(is);
  s.workers.resize(read_count(is, kLimit, "worker"));
  for (auto& w : s.workers) {
    w.pos = {read_f64(is), read_f64(is)};
    w.heading = {read_f64(is), read_f64(is)};
    w.type = read_u32(is);
    w.cargo = static_cast<std::int32_t>(read_u32(is));
    w.alive = read_u8(is) != 0;
    if (w.type >= s.designs.size()) throw FormatError("worker type out of range");
  }
  s.cargo.resize(read_count(is, kLimit, "cargo"));
  for (auto& c : s.cargo) {
    c.pos = {read_f64(is), read_f64(is)};
    c.receptor = read_f64(is);
    const auto st = read_u8(is);
    if (st > 3) throw FormatError("bad cargo state");
    c.state = static_cast<CargoState>(st);
    c.worker = static_cast<std::int32_t>(read_u32(is));
  }
  for (const auto& w : s.workers)
    if (w.cargo >= 0 && (static_cast<std::size_t>(w.cargo) >= s.cargo.size() ||
                         s.cargo[static_cast<std::size_t>(w.cargo)].worker < 0))
      throw FormatError("dangling cargo attachment");
  return s;
}

inline void save_state_file(const std::string& path, const SimState& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_state(os, s);
}

inline SimState load_state_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return load_state(is);
}

}  // namespace varlen::tumor
