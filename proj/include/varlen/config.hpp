#pragma once

// YAML config loading for grids, GA runs and simulator parameters. Unknown
// keys and wrongly typed values raise ConfigError naming the key.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "varlen/evo_ga.hpp"
#include "varlen/experiments.hpp"
#include "varlen/tumor_sim.hpp"

namespace varlen::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// A mapping node plus the keys read from it so far.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw ConfigError(path_.empty() ? "<root>" : path_, "'" + (path_.empty() ? "<root>" : path_) + "' must be a mapping");
  }

  std::string key_path(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key), "config key '" + key_path(key) + "' has a value of the wrong type");
    }
  }

  template <class T>
  void get_list(const std::string& key, std::vector<T>& out) {
    used_.insert(key);
    if (!has(key)) return;
    const YAML::Node n = node_[key];
    if (!n.IsSequence()) throw ConfigError(key_path(key), "config key '" + key_path(key) + "' must be a list");
    std::vector<T> v;
    try {
      for (const auto& item : n) v.push_back(item.as<T>());
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key), "config key '" + key_path(key) + "' has an element of the wrong type");
    }
    out = std::move(v);
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), key_path(key));
  }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  /// Throws on the first key that was never read.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError(key_path(key), "unknown config key '" + key_path(key) + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

inline YAML::Node load_file(const std::string& path) {
  try {
    return YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("<file>", "cannot read config file " + path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<file>", "YAML syntax error in " + path + ": " + e.what());
  }
}

/// Wraps a validate() call so the message carries the offending section.
template <class Fn>
void checked(const std::string& where, Fn fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where, "invalid config in '" + where + "': " + e.what());
  }
}

inline void read_sim(Section s, tumor::SimParams& p) {
  s.get("damage_rate", p.damage_rate);
  s.get("repair_rate", p.repair_rate);
  s.get("drug_death_rate", p.drug_death_rate);
  s.get("elastic_coefficient", p.elastic_coefficient);
  s.get("cargo_o2_relative_uptake", p.cargo_o2_relative_uptake);
  s.get("cargo_apoptosis_rate", p.cargo_apoptosis_rate);
  s.get("cargo_relative_adhesion", p.cargo_relative_adhesion);
  s.get("cargo_relative_repulsion", p.cargo_relative_repulsion);
  s.get("cargo_release_o2_threshold", p.cargo_release_o2_threshold);
  s.get("max_relative_adhesion_distance", p.max_relative_adhesion_distance);
  s.get("max_elastic_displacement", p.max_elastic_displacement);
  s.get("max_attachment_distance", p.max_attachment_distance);
  s.get("min_attachment_distance", p.min_attachment_distance);
  s.get("motility_shutdown_threshold", p.motility_shutdown_threshold);
  s.get("attachment_receptor_threshold", p.attachment_receptor_threshold);
  s.get("worker_speed", p.worker_speed);
  s.get("worker_apoptosis_rate", p.worker_apoptosis_rate);
  s.get("worker_o2_relative_uptake", p.worker_o2_relative_uptake);
  s.get("dt", p.dt);
  s.get("mechanics_dt", p.mechanics_dt);
  s.get("domain_size", p.domain_size);
  s.get("voxel_size", p.voxel_size);
  s.get("o2_boundary", p.o2_boundary);
  s.get("o2_diffusion", p.o2_diffusion);
  s.get("o2_supply_rate", p.o2_supply_rate);
  s.get("cell_o2_uptake", p.cell_o2_uptake);
  s.get("cell_radius", p.cell_radius);
  s.get("agent_radius", p.agent_radius);
  s.get("cell_repulsion", p.cell_repulsion);
  s.get("cell_adhesion", p.cell_adhesion);
  s.get("proliferation_rate", p.proliferation_rate);
  s.get("proliferation_o2_threshold", p.proliferation_o2_threshold);
  s.get("division_attempts", p.division_attempts);
  s.get("daughter_min_gap", p.daughter_min_gap);
  s.get("initial_radius", p.initial_radius);
  s.get("initial_spacing_factor", p.initial_spacing_factor);
  s.get("injection_ring_offset", p.injection_ring_offset);
  s.get("injection_band_width", p.injection_band_width);
  s.get("cargo_count", p.cargo_count);
  s.get("worker_count", p.worker_count);
  s.finish();
  checked(s.key_path(""), [&] { p.validate(); });
}

inline void read_ga(Section s, ga::GaConfig& c) {
  s.get("population_size", c.population_size);
  s.get("tournament_size", c.tournament_size);
  s.get("evaluation_budget", c.evaluation_budget);
  s.get("samples_per_evaluation", c.samples_per_evaluation);
  s.get("mutation_step_fraction", c.mutation_step_fraction);
  s.get("max_types", c.max_types);
  s.get("count_initialization", c.count_initialization);
  s.finish();
}

struct TumorSource {
  std::string fixture;  // empty: grow
  double grow_days = 7.0;
  std::uint64_t grow_seed = 1;
};

inline void read_tumor(Section s, TumorSource& t) {
  s.get("fixture", t.fixture);
  s.get("grow_days", t.grow_days);
  s.get("grow_seed", t.grow_seed);
  s.finish();
}

inline exp::Kind read_kind(Section& s, bool nk) {
  std::string kind;
  s.get("kind", kind);
  if (kind.empty()) throw ConfigError(s.key_path("kind"), "missing config key '" + s.key_path("kind") + "'");
  const auto k = exp::parse_kind(kind);
  if (!k || exp::is_nk(*k) != nk)
    throw ConfigError(s.key_path("kind"), "config key 'kind' has unsupported value '" + kind + "'");
  return *k;
}

inline exp::NkGrid nk_grid_from(const YAML::Node& root) {
  Section s(root, "");
  exp::NkGrid g;
  g.kind = read_kind(s, true);
  s.get("master_seed", g.master_seed);
  s.get_list("n", g.n_values);
  s.get_list("k", g.k_values);
  s.get_list("g", g.g_values);
  s.get_list("p_delete", g.p_delete_values);
  s.get("sweep_p_add", g.sweep_p_add);
  s.get("landscapes", g.landscapes);
  s.get("starts", g.starts);
  s.get("generations", g.generations);
  s.finish();
  checked("grid", [&] { g.validate(); });
  return g;
}

inline exp::GaGrid ga_grid_from(const YAML::Node& root) {
  Section s(root, "");
  exp::GaGrid g;
  g.kind = read_kind(s, false);
  s.get("master_seed", g.master_seed);
  s.get("runs", g.runs);
  s.get_list("types_added", g.types_added_values);
  s.get("p_add_type", g.p_add_type);
  s.get("treatment_days", g.treatment_days);
  TumorSource t;
  read_tumor(s.child("tumor"), t);
  g.tumor_fixture = t.fixture;
  g.grow_days = t.grow_days;
  g.grow_seed = t.grow_seed;
  read_ga(s.child("ga"), g.base);
  read_sim(s.child("sim"), g.sim);
  s.finish();
  checked("grid", [&] { g.validate(); });
  return g;
}

/// A single GA run.
struct GaRunConfig {
  ga::GaConfig ga;
  tumor::SimParams sim;
  TumorSource tumor;
  double treatment_days = 3.0;
};

inline GaRunConfig ga_run_from(const YAML::Node& root) {
  Section s(root, "");
  GaRunConfig c;
  s.get("seed", c.ga.seed);
  s.get("p_add_type", c.ga.p_add_type);
  s.get("types_added_per_event", c.ga.types_added_per_event);
  s.get("treatment_days", c.treatment_days);
  read_tumor(s.child("tumor"), c.tumor);
  read_ga(s.child("ga"), c.ga);
  read_sim(s.child("sim"), c.sim);
  s.finish();
  checked("ga", [&] { c.ga.validate(); });
  if (!(c.treatment_days > 0.0)) throw ConfigError("treatment_days", "config key 'treatment_days' must be positive");
  return c;
}

inline tumor::NpDesign design_from(Section s) {
  tumor::NpDesign d;
  for (std::size_t i = 0; i < tumor::NpDesign::kParamCount; ++i) s.get(std::string(tumor::NpDesign::kNames[i]), d.param(i));
  s.finish();
  if (!d.in_bounds()) throw ConfigError(s.key_path(""), "NP design '" + s.key_path("") + "' has a parameter out of range");
  return d;
}

/// A single treatment evaluation.
struct SimEvalConfig {
  tumor::Treatment treatment;
  tumor::SimParams sim;
  TumorSource tumor;
  double days = 3.0;
  std::uint64_t seed = 0;
  std::size_t samples = 1;
  bool telemetry = false;
};

inline SimEvalConfig sim_eval_from(const YAML::Node& root) {
  Section s(root, "");
  SimEvalConfig c;
  s.get("seed", c.seed);
  s.get("days", c.days);
  s.get("samples", c.samples);
  s.get("telemetry", c.telemetry);
  const YAML::Node types = s.raw("treatment");
  if (!types || !types.IsSequence() || types.size() == 0)
    throw ConfigError("treatment", "config key 'treatment' must be a non-empty list of NP designs");
  std::vector<tumor::NpDesign> designs;
  for (std::size_t i = 0; i < types.size(); ++i)
    designs.push_back(design_from(Section(types[i], "treatment[" + std::to_string(i) + "]")));
  if (designs.size() > tumor::kMaxTypes)
    throw ConfigError("treatment", "config key 'treatment' lists more than " + std::to_string(tumor::kMaxTypes) + " types");
  c.treatment = tumor::Treatment(std::move(designs));
  read_tumor(s.child("tumor"), c.tumor);
  read_sim(s.child("sim"), c.sim);
  s.finish();
  if (c.samples < 1) throw ConfigError("samples", "config key 'samples' must be at least 1");
  if (!(c.days >= 0.0)) throw ConfigError("days", "config key 'days' must be nonnegative");
  return c;
}

/// Tumour fixture generation.
struct TumorGrowConfig {
  tumor::SimParams sim;
  double days = 7.0;
  std::uint64_t seed = 1;
  std::string output = "tumor.vlts";
};

inline TumorGrowConfig tumor_grow_from(const YAML::Node& root) {
  Section s(root, "");
  TumorGrowConfig c;
  s.get("days", c.days);
  s.get("seed", c.seed);
  s.get("output", c.output);
  read_sim(s.child("sim"), c.sim);
  s.finish();
  if (!(c.days >= 0.0)) throw ConfigError("days", "config key 'days' must be nonnegative");
  return c;
}

}  // namespace varlen::config
