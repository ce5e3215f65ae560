#pragma once

// Population-of-one adaptive walks on NK landscapes, with optional growth
// and deletion of gene blocks.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "varlen/nk_landscape.hpp"
#include "varlen/random.hpp"

namespace varlen {

struct WalkConfig {
  std::size_t generations = 20000;
  std::size_t g = 0;  // growth block size; 0 = fixed length
  double p_allele = 1.0;
  double p_add = 0.0;
  double p_delete = 0.0;
  std::uint64_t seed = 0;
  bool record_series = true;

  /// Fixed-length walk.
  static WalkConfig fixed(std::size_t generations, std::uint64_t seed) {
    return {generations, 0, 1.0, 0.0, 0.0, seed, true};
  }

  /// Allele mutation or growth with equal probability.
  static WalkConfig growth(std::size_t generations, std::size_t g, std::uint64_t seed) {
    return {generations, g, 0.5, 0.5, 0.0, seed, true};
  }

  /// 50% allele mutation, 25% growth, 25% deletion.
  static WalkConfig growth_deletion(std::size_t generations, std::size_t g, std::uint64_t seed) {
    return {generations, g, 0.5, 0.25, 0.25, seed, true};
  }

  void validate() const {
    if (p_allele < 0.0 || p_add < 0.0 || p_delete < 0.0)
      throw std::invalid_argument("walk probabilities must be nonnegative");
    if (std::abs(p_allele + p_add + p_delete - 1.0) > 1e-12)
      throw std::invalid_argument("walk probabilities must sum to 1");
    if (g == 0 && (p_add > 0.0 || p_delete > 0.0))
      throw std::invalid_argument("growth/deletion probability set but block size g is 0");
  }
};

struct WalkTrace {
  std::vector<double> fitness_series;      // after generation t, index t-1
  std::vector<std::uint32_t> length_series;
  std::vector<std::uint32_t> accepted_growth_generations;
  std::size_t walk_length_to_optimum = 0;  // last strictly improving step
  std::size_t length_stop_generation = 0;  // last accepted length change
  std::size_t last_accepted_generation = 0;
  std::size_t generations = 0;
  double initial_fitness = 0.0;
  double final_fitness = 0.0;
  std::size_t final_length = 0;
  Genome final_genome;
};

struct AlleleFlip {
  std::size_t index;
  std::uint8_t old_allele;
};

/// Flips one uniformly chosen allele and returns the undo record.
inline AlleleFlip allele_mutation(Genome& genome, Rng& rng) {
  if (genome.size() == 0) throw std::invalid_argument("allele_mutation on empty genome");
  const auto i = static_cast<std::size_t>(rng.below(genome.size()));
  AlleleFlip flip{i, genome.alleles[i]};
  genome.flip(i);
  return flip;
}

inline void undo(Genome& genome, const AlleleFlip& flip) { genome.alleles[flip.index] = flip.old_allele; }

/// Greater fitness wins; equal fitness wins on a fair coin. The coin is
/// only drawn on a tie.
inline bool accept(double current, double mutant, Rng& rng) {
  if (mutant > current) return true;
  if (mutant == current) return rng.coin();
  return false;
}

/// Per-gene contributions kept in step with a landscape/genome pair, so a
/// mutation only recomputes the genes it touches. total() sums in gene
/// order and is bit-identical to evaluate().
class IncrementalFitness {
 public:
  IncrementalFitness(const NkLandscape& land, const Genome& genome) : land_(&land), genome_(&genome) {
    const std::size_t n = land.size();
    contrib_.resize(n);
    dependents_.assign(n, {});
    for (std::uint32_t j = 0; j < n; ++j) {
      contrib_[j] = land.contribution(j, genome);
      for (auto t : land.links(j)) dependents_[t].push_back(j);
    }
  }

  double total() const {
    double sum = 0.0;
    for (double c : contrib_) sum += c;
    return sum / static_cast<double>(contrib_.size());
  }

  void on_flip(std::size_t i) {
    refresh(i);
    for (auto j : dependents_[i]) refresh(j);
  }

  /// After add_genes or restore_block.
  void on_grow() {
    const GrowthRecord& rec = land_->history().back();
    const std::size_t old_size = contrib_.size();
    const std::size_t n = land_->size();
    contrib_.resize(n);
    dependents_.resize(n);
    for (std::uint32_t j = static_cast<std::uint32_t>(old_size); j < n; ++j)
      for (auto t : land_->links(j)) dependents_[t].push_back(j);
    for (const Rewire& r : rec.rewires) {
      erase_one(dependents_[r.prior_target], r.gene);
      dependents_[r.new_target].push_back(r.gene);
    }
    for (std::size_t j = old_size; j < n; ++j) refresh(j);
    for (const Rewire& r : rec.rewires) refresh(r.gene);
  }

  /// After remove_last_block returned `block`.
  void on_shrink(const RemovedBlock& block) {
    const std::size_t keep = land_->size();
    for (auto it = block.record.rewires.rbegin(); it != block.record.rewires.rend(); ++it) {
      erase_one(dependents_[it->new_target], it->gene);
      dependents_[it->prior_target].push_back(it->gene);
    }
    for (std::size_t b = 0; b < block.genes.size(); ++b) {
      const auto j = static_cast<std::uint32_t>(keep + b);
      for (auto t : block.genes[b].links)
        if (t < keep) erase_one(dependents_[t], j);
    }
    contrib_.resize(keep);
    dependents_.resize(keep);
    for (const Rewire& r : block.record.rewires) refresh(r.gene);
  }

 private:
  void refresh(std::size_t j) { contrib_[j] = land_->contribution(j, *genome_); }

  static void erase_one(std::vector<std::uint32_t>& v, std::uint32_t value) {
    for (auto& x : v) {
      if (x == value) {
        x = v.back();
        v.pop_back();
        return;
      }
    }
  }

  const NkLandscape* land_;
  const Genome* genome_;
  std::vector<double> contrib_;
  std::vector<std::vector<std::uint32_t>> dependents_;
};

/// Runs one walk on a private copy of `landscape` from a random start
/// genome drawn from the walk seed.
///
/// Per generation: one uniform draw picks the mutation class by cumulative
/// (p_allele, p_add, p_delete); the mutant is built in place and rolled back
/// exactly if rejected. Deletion with no added block left is a rejected
/// event.
inline WalkTrace run_walk(NkLandscape landscape, const WalkConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Genome genome = Genome::random(landscape.size(), rng);
  IncrementalFitness inc(landscape, genome);
  double fitness = inc.total();

  WalkTrace trace;
  trace.generations = cfg.generations;
  trace.initial_fitness = fitness;
  if (cfg.record_series) {
    trace.fitness_series.reserve(cfg.generations);
    trace.length_series.reserve(cfg.generations);
  }

  for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
    const double u = rng.uniform01();
    bool accepted = false;
    bool length_changed = false;
    double mutant = fitness;

    if (u < cfg.p_allele) {
      const AlleleFlip flip = allele_mutation(genome, rng);
      inc.on_flip(flip.index);
      mutant = inc.total();
      accepted = accept(fitness, mutant, rng);
      if (!accepted) {
        undo(genome, flip);
        inc.on_flip(flip.index);
      }
    } else if (u < cfg.p_allele + cfg.p_add) {
      add_genes(landscape, genome, cfg.g, rng);
      inc.on_grow();
      mutant = inc.total();
      accepted = accept(fitness, mutant, rng);
      if (accepted) {
        length_changed = true;
        trace.accepted_growth_generations.push_back(static_cast<std::uint32_t>(gen));
      } else {
        inc.on_shrink(*remove_last_block(landscape, genome));
      }
    } else {
      if (auto removed = remove_last_block(landscape, genome)) {
        inc.on_shrink(*removed);
        mutant = inc.total();
        accepted = accept(fitness, mutant, rng);
        if (accepted) {
          length_changed = true;
        } else {
          restore_block(landscape, genome, std::move(*removed));
          inc.on_grow();
        }
      }
    }

    if (accepted) {
      if (mutant > fitness) trace.walk_length_to_optimum = gen;
      if (length_changed) trace.length_stop_generation = gen;
      trace.last_accepted_generation = gen;
      fitness = mutant;
    }
    if (cfg.record_series) {
      trace.fitness_series.push_back(fitness);
      trace.length_series.push_back(static_cast<std::uint32_t>(genome.size()));
    }
  }

  trace.final_fitness = fitness;
  trace.final_length = genome.size();
  trace.final_genome = std::move(genome);
  return trace;
}

struct WaitingTime {
  std::optional<double> mean;  // nullopt: no trace reached the j-th growth
  std::size_t reached = 0;
  std::size_t total = 0;
};

/// Mean generation of the j-th (1-based) accepted growth over the traces
/// that reached it.
inline WaitingTime waiting_time_stats(std::span<const std::vector<std::uint32_t>> growth_generations,
                                      std::size_t j) {
  if (j == 0) throw std::invalid_argument("waiting_time_stats: ordinal j starts at 1");
  if (growth_generations.empty()) throw std::invalid_argument("waiting_time_stats: no traces");
  WaitingTime out;
  out.total = growth_generations.size();
  double sum = 0.0;
  for (const auto& g : growth_generations) {
    if (g.size() >= j) {
      sum += g[j - 1];
      ++out.reached;
    }
  }
  if (out.reached > 0) out.mean = sum / static_cast<double>(out.reached);
  return out;
}

inline WaitingTime waiting_time_stats(std::span<const WalkTrace> traces, std::size_t j) {
  std::vector<std::vector<std::uint32_t>> gens;
  gens.reserve(traces.size());
  for (const auto& t : traces) gens.push_back(t.accepted_growth_generations);
  return waiting_time_stats(std::span<const std::vector<std::uint32_t>>(gens), j);
}

}  // namespace varlen
