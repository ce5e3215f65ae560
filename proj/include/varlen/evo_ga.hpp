#pragma once

// Steady-state genetic algorithm over NP treatments, fixed or variable
// length, minimizing a noisy evaluator (remaining cancer cells).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "varlen/random.hpp"
#include "varlen/tumor_sim.hpp"

namespace varlen::ga {

using tumor::NpDesign;
using tumor::Treatment;

/// Evaluator: (treatment, seed) -> fitness, lower is better.
using Evaluator = std::function<double(const Treatment&, std::uint64_t)>;

struct GaConfig {
  std::size_t population_size = 20;
  std::size_t tournament_size = 2;
  // Evaluator invocations spent on offspring. With count_initialization the
  // initial population's P * samples invocations come out of it as well.
  std::size_t evaluation_budget = 1000;
  std::size_t samples_per_evaluation = 5;
  double mutation_step_fraction = 0.05;
  double p_add_type = 0.0;
  std::size_t types_added_per_event = 1;
  std::size_t max_types = tumor::kMaxTypes;
  bool count_initialization = false;
  std::uint64_t seed = 0;

  std::size_t initialization_cost() const { return population_size * samples_per_evaluation; }

  std::size_t generations() const {
    const std::size_t spendable = count_initialization ? evaluation_budget - initialization_cost() : evaluation_budget;
    return spendable / samples_per_evaluation;
  }

  void validate() const {
    if (population_size < 2) throw std::invalid_argument("population_size must be at least 2");
    if (tournament_size < 1 || tournament_size > population_size)
      throw std::invalid_argument("tournament_size must be in [1, population_size]");
    if (samples_per_evaluation < 1) throw std::invalid_argument("samples_per_evaluation must be at least 1");
    if (!(p_add_type >= 0.0 && p_add_type <= 1.0)) throw std::invalid_argument("p_add_type must be in [0, 1]");
    if (!(mutation_step_fraction >= 0.0)) throw std::invalid_argument("mutation_step_fraction must be >= 0");
    if (max_types < 1 || max_types > tumor::kMaxTypes)
      throw std::invalid_argument("max_types must be in [1, " + std::to_string(tumor::kMaxTypes) + "]");
    if (types_added_per_event < 1) throw std::invalid_argument("types_added_per_event must be at least 1");
    if (count_initialization && evaluation_budget < initialization_cost())
      throw std::invalid_argument("evaluation budget " + std::to_string(evaluation_budget) +
                                  " is too small to initialize the population (" +
                                  std::to_string(initialization_cost()) + " evaluations)");
    if (!count_initialization && evaluation_budget < samples_per_evaluation)
      throw std::invalid_argument("evaluation budget is smaller than one sampled evaluation");
  }
};

struct Individual {
  Treatment treatment;
  double sampled_fitness = 0.0;
};

struct GenerationRecord {
  std::size_t generation = 0;
  double mean_fitness = 0.0;
  double best_fitness = 0.0;
  std::size_t best_type_count = 0;
  std::vector<std::uint32_t> type_histogram;  // index k-1 counts k-type individuals
  bool replaced = false;
};

struct GaTrace {
  std::vector<GenerationRecord> generations;  // entry 0 is the initial population
  std::size_t evaluations = 0;                // offspring evaluator invocations
  std::size_t initial_evaluations = 0;
  std::vector<Individual> final_population;

  const GenerationRecord& last() const { return generations.back(); }
};

/// Mean of `samples` evaluator calls; call i uses derive_seed({seed, i}).
inline double evaluate_static(const Evaluator& evaluator, const Treatment& treatment, std::size_t samples,
                              std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("evaluate_static needs at least one sample");
  double sum = 0.0;
  for (std::size_t i = 0; i < samples; ++i) sum += evaluator(treatment, derive_seed({seed, i}));
  return sum / static_cast<double>(samples);
}

enum class Direction { kBest, kWorst };

/// Draws t distinct indices; returns the lowest (kBest) or highest (kWorst)
/// fitness among them. Ties go to the first drawn.
inline std::size_t tournament(std::span<const Individual> population, std::size_t t, Rng& rng, Direction dir) {
  if (t == 0 || t > population.size()) throw std::invalid_argument("tournament size out of range");
  const auto n = static_cast<std::uint32_t>(population.size());
  const auto picks = sample_distinct(rng, n, t, n);
  std::size_t chosen = picks[0];
  for (std::size_t k = 1; k < picks.size(); ++k) {
    const double f = population[picks[k]].sampled_fitness;
    const double c = population[chosen].sampled_fitness;
    if (dir == Direction::kBest ? f < c : f > c) chosen = picks[k];
  }
  return chosen;
}

/// Perturbs one parameter drawn uniformly over all types, or (with
/// probability p_add_type) appends random types. Growth past max_types is
/// dropped and the event is still consumed.
inline Individual mutate(const Individual& parent, const GaConfig& cfg, Rng& rng) {
  Individual child = parent;
  auto& types = child.treatment.np_types;
  if (rng.uniform01() < cfg.p_add_type) {
    if (types.size() + cfg.types_added_per_event <= cfg.max_types)
      for (std::size_t i = 0; i < cfg.types_added_per_event; ++i) types.push_back(NpDesign::random(rng));
  } else {
    const auto k = static_cast<std::size_t>(rng.below(types.size() * NpDesign::kParamCount));
    NpDesign& d = types[k / NpDesign::kParamCount];
    const std::size_t param = k % NpDesign::kParamCount;
    const auto range = NpDesign::kRanges[param];
    const double step = rng.uniform(-cfg.mutation_step_fraction, cfg.mutation_step_fraction) * range.span();
    d.param(param) = std::clamp(d.param(param) + step, range.lo, range.hi);
  }
  child.treatment.rebalance();
  return child;
}

/// P random single-type individuals, each evaluated with static sampling.
/// Depends only on (evaluator, population size, samples, seed), so arms
/// that differ in p_add_type can share it.
inline std::vector<Individual> initial_population(const Evaluator& evaluator, const GaConfig& cfg,
                                                  std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0x1a17}));
  std::vector<Individual> pop(cfg.population_size);
  for (auto& ind : pop) ind.treatment = Treatment({NpDesign::random(rng)});
  for (std::size_t i = 0; i < pop.size(); ++i)
    pop[i].sampled_fitness =
        evaluate_static(evaluator, pop[i].treatment, cfg.samples_per_evaluation, derive_seed({seed, 0x1a17, i}));
  return pop;
}

inline GenerationRecord summarize(std::span<const Individual> pop, std::size_t generation, std::size_t max_types) {
  GenerationRecord r;
  r.generation = generation;
  r.type_histogram.assign(max_types, 0);
  std::size_t best = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    sum += pop[i].sampled_fitness;
    if (pop[i].sampled_fitness < pop[best].sampled_fitness) best = i;
    ++r.type_histogram[pop[i].treatment.type_count() - 1];
  }
  r.mean_fitness = sum / static_cast<double>(pop.size());
  r.best_fitness = pop[best].sampled_fitness;
  r.best_type_count = pop[best].treatment.type_count();
  return r;
}

/// Runs the steady-state loop from `initial` (or a fresh population drawn
/// from cfg.seed when empty).
inline GaTrace run_ga(const Evaluator& evaluator, const GaConfig& cfg, std::vector<Individual> initial = {}) {
  cfg.validate();
  GaTrace trace;
  if (initial.empty()) {
    initial = initial_population(evaluator, cfg, cfg.seed);
    trace.initial_evaluations = cfg.initialization_cost();
  } else if (initial.size() != cfg.population_size) {
    throw std::invalid_argument("initial population size does not match population_size");
  }
  for (const auto& ind : initial) {
    ind.treatment.validate();
    if (ind.treatment.type_count() > cfg.max_types) throw std::invalid_argument("initial individual exceeds max_types");
  }
  std::vector<Individual> pop = std::move(initial);
  Rng rng(derive_seed({cfg.seed, 0x6a}));
  trace.generations.push_back(summarize(pop, 0, cfg.max_types));

  const std::size_t generations = cfg.generations();
  for (std::size_t gen = 1; gen <= generations; ++gen) {
    const std::size_t parent = tournament(pop, cfg.tournament_size, rng, Direction::kBest);
    Individual child = mutate(pop[parent], cfg, rng);
    child.sampled_fitness =
        evaluate_static(evaluator, child.treatment, cfg.samples_per_evaluation, derive_seed({cfg.seed, 0xe7, gen}));
    trace.evaluations += cfg.samples_per_evaluation;
    const std::size_t victim = tournament(pop, cfg.tournament_size, rng, Direction::kWorst);
    const bool replace = child.sampled_fitness < pop[victim].sampled_fitness;
    if (replace) pop[victim] = std::move(child);
    trace.generations.push_back(summarize(pop, gen, cfg.max_types));
    trace.generations.back().replaced = replace;
  }
  trace.final_population = std::move(pop);
  return trace;
}

/// Evaluator backed by the tumour analogue on a fixed tumour.
inline Evaluator tumor_evaluator(const tumor::SimState& tumor, const tumor::SimParams& params, double days) {
  return [&tumor, params, days](const Treatment& t, std::uint64_t seed) {
    return static_cast<double>(tumor::apply_treatment(tumor, t, params, days, seed));
  };
}

inline void write_trace_csv(std::ostream& os, const GaTrace& trace) {
  os << "generation,mean_fitness,best_fitness,best_type_count,population_type_histogram\n";
  for (const auto& g : trace.generations) {
    os << g.generation << ',' << g.mean_fitness << ',' << g.best_fitness << ',' << g.best_type_count << ',';
    for (std::size_t k = 0; k < g.type_histogram.size(); ++k) os << (k ? ";" : "") << g.type_histogram[k];
    os << '\n';
  }
}

}  // namespace varlen::ga
