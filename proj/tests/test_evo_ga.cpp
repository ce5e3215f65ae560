#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "varlen/evo_ga.hpp"
#include "varlen/stats.hpp"

using namespace varlen;
using namespace varlen::ga;

namespace {

GaConfig small_config(double p_add, std::size_t budget, std::uint64_t seed) {
  GaConfig c;
  c.population_size = 10;
  c.samples_per_evaluation = 1;
  c.evaluation_budget = budget;
  c.p_add_type = p_add;
  c.seed = seed;
  return c;
}

double types_of(const Treatment& t, std::uint64_t) { return static_cast<double>(t.type_count()); }

std::vector<Individual> ranked_population(std::size_t n) {
  std::vector<Individual> pop(n);
  for (std::size_t i = 0; i < n; ++i) {
    pop[i].treatment = Treatment({NpDesign{}});
    pop[i].sampled_fitness = static_cast<double>(i);
  }
  return pop;
}

}  // namespace

TEST(Budget, GenerationsFromBudget) {
  GaConfig c;
  EXPECT_EQ(c.generations(), 200u);
  EXPECT_EQ(c.initialization_cost(), 100u);
  c.count_initialization = true;
  EXPECT_EQ(c.generations(), 180u);
  c.evaluation_budget = 50;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Budget, OffspringCallsMatchBudget) {
  std::atomic<std::size_t> calls{0};
  Evaluator e = [&](const Treatment&, std::uint64_t s) {
    ++calls;
    return static_cast<double>(s % 97);
  };
  GaConfig c;
  c.p_add_type = 0.5;
  c.seed = 3;
  const GaTrace t = run_ga(e, c);
  EXPECT_EQ(t.evaluations, 1000u);
  EXPECT_EQ(t.initial_evaluations, 100u);
  EXPECT_EQ(calls.load(), 1100u);
  EXPECT_EQ(t.generations.size(), 201u);
}

TEST(Budget, SharedInitialPopulationNotCharged) {
  GaConfig c = small_config(0.0, 20, 1);
  const auto init = initial_population(types_of, c, 9);
  const GaTrace t = run_ga(types_of, c, init);
  EXPECT_EQ(t.initial_evaluations, 0u);
  EXPECT_EQ(t.evaluations, 20u);
}

TEST(StaticSampling, MeanOfSamples) {
  Evaluator e = [](const Treatment&, std::uint64_t s) { return 400.0 + 10.0 * static_cast<double>(s); };
  std::vector<std::uint64_t> seeds;
  Evaluator rec = [&](const Treatment&, std::uint64_t s) {
    seeds.push_back(s);
    return 0.0;
  };
  evaluate_static(rec, Treatment({NpDesign{}}), 5, 77);
  ASSERT_EQ(seeds.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(seeds[i], derive_seed({77, i}));
  std::size_t i = 0;
  Evaluator seq = [&](const Treatment&, std::uint64_t) { return 400.0 + 10.0 * static_cast<double>(i++); };
  EXPECT_DOUBLE_EQ(evaluate_static(seq, Treatment({NpDesign{}}), 5, 1), 420.0);
  EXPECT_THROW(evaluate_static(e, Treatment({NpDesign{}}), 0, 1), std::invalid_argument);
}

TEST(StaticSampling, FiveSamplesReduceVarianceOnTumour) {
  const tumor::SimState fixture = tumor::load_state_file(VARLEN_TEST_DATA "/tumor_7d.vlts");
  const Evaluator e = tumor_evaluator(fixture, tumor::SimParams{}, 3);
  const Treatment t({NpDesign{}});
  std::vector<double> single, five;
  for (std::uint64_t r = 0; r < 12; ++r) {
    single.push_back(e(t, derive_seed({1000, r})));
    five.push_back(evaluate_static(e, t, 5, derive_seed({2000, r})));
  }
  EXPECT_LT(stats::variance(five), stats::variance(single));
}

TEST(Tournament, SizeOneIsUniformAndBestWinsAtTwoOverP) {
  const auto pop = ranked_population(20);
  Rng r(4);
  constexpr int kDraws = 200000;
  int best = 0, worst_as_best = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto w = tournament(pop, 2, r, Direction::kBest);
    best += w == 0;
    worst_as_best += w == 19;
  }
  // P(best individual drawn into a 2-tournament) = 2/P.
  EXPECT_NEAR(best / double(kDraws), 0.1, 0.004);
  EXPECT_EQ(worst_as_best, 0);
  int worst = 0;
  for (int i = 0; i < kDraws; ++i) worst += tournament(pop, 2, r, Direction::kWorst) == 19;
  EXPECT_NEAR(worst / double(kDraws), 0.1, 0.004);
  std::vector<int> hits(20, 0);
  for (int i = 0; i < kDraws; ++i) ++hits[tournament(pop, 1, r, Direction::kBest)];
  for (int h : hits) EXPECT_NEAR(h / double(kDraws), 0.05, 0.004);
  EXPECT_THROW(tournament(pop, 21, r, Direction::kBest), std::invalid_argument);
}

TEST(Tournament, FullSizeIsDeterministic) {
  const auto pop = ranked_population(7);
  Rng r(1);
  EXPECT_EQ(tournament(pop, 7, r, Direction::kBest), 0u);
  EXPECT_EQ(tournament(pop, 7, r, Direction::kWorst), 6u);
}

TEST(Mutation, ClampsToRange) {
  GaConfig c;
  Individual ind;
  NpDesign d;
  for (std::size_t i = 0; i < NpDesign::kParamCount; ++i) d.param(i) = NpDesign::kRanges[i].hi;
  d.persistence_time = 9.9;
  ind.treatment = Treatment({d});
  Rng r(5);
  bool hit_cap = false;
  for (int i = 0; i < 2000; ++i) {
    const Individual m = mutate(ind, c, r);
    ASSERT_TRUE(m.treatment.np_types[0].in_bounds());
    hit_cap = hit_cap || m.treatment.np_types[0].persistence_time == 10.0;
  }
  EXPECT_TRUE(hit_cap);
}

TEST(Mutation, StepWithinFivePercentOfRange) {
  GaConfig c;
  Individual ind;
  ind.treatment = Treatment({NpDesign{}});
  Rng r(6);
  for (int i = 0; i < 2000; ++i) {
    const Individual m = mutate(ind, c, r);
    std::size_t changed = 0;
    for (std::size_t k = 0; k < NpDesign::kParamCount; ++k) {
      const double delta = std::abs(m.treatment.np_types[0].param(k) - ind.treatment.np_types[0].param(k));
      ASSERT_LE(delta, 0.05 * NpDesign::kRanges[k].span() + 1e-12);
      changed += delta > 0;
    }
    ASSERT_LE(changed, 1u);
  }
}

TEST(Mutation, AddTwoTypesRebalancesWorkers) {
  GaConfig c;
  c.p_add_type = 1.0;
  c.types_added_per_event = 2;
  Individual ind;
  ind.treatment = Treatment({NpDesign{}});
  Rng r(7);
  const Individual m = mutate(ind, c, r);
  EXPECT_EQ(m.treatment.type_count(), 3u);
  EXPECT_EQ(m.treatment.worker_counts, (std::vector<std::uint32_t>{17, 17, 16}));
  EXPECT_EQ(m.treatment.np_types[0], ind.treatment.np_types[0]);
  EXPECT_NO_THROW(m.treatment.validate());
}

TEST(Mutation, GrowthPastCapIsConsumedNoOp) {
  GaConfig c;
  c.p_add_type = 1.0;
  Individual ind;
  ind.treatment = Treatment(std::vector<NpDesign>(10));
  Rng r(8);
  EXPECT_EQ(mutate(ind, c, r).treatment, ind.treatment);
  c.types_added_per_event = 2;
  ind.treatment = Treatment(std::vector<NpDesign>(9));
  EXPECT_EQ(mutate(ind, c, r).treatment, ind.treatment);
}

TEST(Ga, ConstantEvaluatorNeverReplaces) {
  Evaluator e = [](const Treatment&, std::uint64_t) { return 5.0; };
  const GaTrace t = run_ga(e, small_config(0.5, 200, 2));
  for (std::size_t g = 1; g < t.generations.size(); ++g) EXPECT_FALSE(t.generations[g].replaced);
  for (const auto& ind : t.final_population) EXPECT_EQ(ind.treatment.type_count(), 1u);
}

TEST(Ga, FewerTypesPreferredStaysSingleType) {
  const GaTrace t = run_ga(types_of, small_config(0.5, 500, 3));
  EXPECT_EQ(t.last().best_type_count, 1u);
  EXPECT_DOUBLE_EQ(t.last().best_fitness, 1.0);
  for (const auto& ind : t.final_population) EXPECT_EQ(ind.treatment.type_count(), 1u);
}

TEST(Ga, MoreTypesPreferredReachesCap) {
  Evaluator e = [](const Treatment& t, std::uint64_t) { return 10.0 - static_cast<double>(t.type_count()); };
  const GaTrace t = run_ga(e, small_config(0.5, 2000, 4));
  EXPECT_EQ(t.last().best_type_count, 10u);
  for (const auto& ind : t.final_population) EXPECT_LE(ind.treatment.type_count(), 10u);
}

TEST(Ga, FixedLengthWithoutAddition) {
  Evaluator e = [](const Treatment& t, std::uint64_t s) {
    return t.np_types[0].persistence_time + static_cast<double>(s % 5);
  };
  const GaTrace t = run_ga(e, small_config(0.0, 300, 5));
  for (const auto& g : t.generations) EXPECT_EQ(g.type_histogram[0], 10u);
}

TEST(Ga, BestNeverWorsensAndRunIsDeterministic) {
  Evaluator e = [](const Treatment& t, std::uint64_t s) {
    double f = 0;
    for (const auto& d : t.np_types) f += d.relative_adhesion;
    return f + static_cast<double>(s % 11);
  };
  const GaConfig c = small_config(0.3, 400, 6);
  const GaTrace a = run_ga(e, c), b = run_ga(e, c);
  for (std::size_t g = 1; g < a.generations.size(); ++g)
    EXPECT_LE(a.generations[g].best_fitness, a.generations[g - 1].best_fitness);
  ASSERT_EQ(a.generations.size(), b.generations.size());
  for (std::size_t g = 0; g < a.generations.size(); ++g) {
    EXPECT_EQ(a.generations[g].best_fitness, b.generations[g].best_fitness);
    EXPECT_EQ(a.generations[g].type_histogram, b.generations[g].type_histogram);
  }
  for (std::size_t i = 0; i < a.final_population.size(); ++i)
    EXPECT_EQ(a.final_population[i].treatment, b.final_population[i].treatment);
}

TEST(Ga, InvalidConfigRejected) {
  GaConfig c;
  c.population_size = 1;
  EXPECT_THROW(run_ga(types_of, c), std::invalid_argument);
  c = GaConfig{};
  c.p_add_type = 1.5;
  EXPECT_THROW(run_ga(types_of, c), std::invalid_argument);
  c = small_config(0.0, 10, 1);
  EXPECT_THROW(run_ga(types_of, c, ranked_population(3)), std::invalid_argument);
}

TEST(Trace, CsvHasOneRowPerGeneration) {
  const GaTrace t = run_ga(types_of, small_config(0.0, 5, 1));
  std::ostringstream os;
  write_trace_csv(os, t);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("generation,mean_fitness,best_fitness,best_type_count,population_type_histogram\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 6);
}
