#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "varlen/nk_landscape.hpp"

using namespace varlen;

namespace {

// Independent evaluation: rebuilds every table index from the documented
// bit order (own allele bit 0, link j at bit j+1).
double oracle_fitness(const NkLandscape& land, const Genome& g) {
  double sum = 0.0;
  for (std::size_t i = 0; i < land.size(); ++i) {
    const auto links = land.links(i);
    std::size_t idx = 0;
    for (std::size_t j = links.size(); j-- > 0;) idx = idx * 2 + g.alleles[links[j]];
    idx = idx * 2 + g.alleles[i];
    sum += land.table(i)[idx];
  }
  return sum / static_cast<double>(land.size());
}

Genome from_mask(std::size_t n, std::uint64_t mask) {
  Genome g;
  for (std::size_t i = 0; i < n; ++i) g.alleles.push_back(static_cast<std::uint8_t>((mask >> i) & 1u));
  return g;
}

}  // namespace

TEST(Generate, MinimalLandscape) {
  const auto land = NkLandscape::generate(1, 0, 5);
  EXPECT_EQ(land.size(), 1u);
  EXPECT_EQ(land.table(0).size(), 2u);
}

TEST(Generate, ThreeGenesOneLink) {
  const auto land = NkLandscape::generate(3, 1, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(land.links(i).size(), 1u);
    EXPECT_NE(land.links(i)[0], i);
    EXPECT_EQ(land.table(i).size(), 4u);
  }
}

TEST(Generate, K15TableShape) {
  const auto land = NkLandscape::generate(20, 15, 5);
  EXPECT_EQ(land.table_size(), 65536u);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto l = land.links(i);
    std::set<std::uint32_t> s(l.begin(), l.end());
    EXPECT_EQ(s.size(), 15u);
    EXPECT_FALSE(s.count(static_cast<std::uint32_t>(i)));
  }
  const auto t = land.table(3);
  EXPECT_TRUE(std::all_of(t.begin(), t.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
}

TEST(Generate, RejectsKNotBelowN) {
  EXPECT_THROW(NkLandscape::generate(4, 4, 1), std::invalid_argument);
  EXPECT_THROW(NkLandscape::generate(0, 0, 1), std::invalid_argument);
}

TEST(Generate, DeterministicPerSeed) {
  EXPECT_EQ(NkLandscape::generate(20, 4, 9), NkLandscape::generate(20, 4, 9));
  EXPECT_FALSE(NkLandscape::generate(20, 4, 9) == NkLandscape::generate(20, 4, 10));
}

TEST(Evaluate, TwoGeneDirectFormula) {
  const auto land = NkLandscape::from_tables(0, {{}, {}}, {{0.2, 0.8}, {0.4, 0.6}});
  EXPECT_DOUBLE_EQ(evaluate(land, from_mask(2, 0b11)), 0.7);
}

TEST(Evaluate, K0IgnoresLinks) {
  const auto a = NkLandscape::generate(8, 0, 3);
  Rng r(1);
  for (int t = 0; t < 20; ++t) {
    const Genome g = Genome::random(8, r);
    double sum = 0;
    for (std::size_t i = 0; i < 8; ++i) sum += a.table(i)[g[i]];
    EXPECT_DOUBLE_EQ(evaluate(a, g), sum / 8.0);
  }
}

TEST(Evaluate, ExhaustiveOracleN4K2) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto land = NkLandscape::generate(4, 2, seed);
    for (std::uint64_t m = 0; m < 16; ++m) {
      const Genome g = from_mask(4, m);
      ASSERT_EQ(evaluate(land, g), oracle_fitness(land, g));
    }
  }
}

TEST(Evaluate, LengthMismatchThrows) {
  const auto land = NkLandscape::generate(4, 1, 1);
  EXPECT_THROW(evaluate(land, from_mask(3, 0)), std::invalid_argument);
}

TEST(Evaluate, BoundedInUnitInterval) {
  Rng r(2);
  for (int t = 0; t < 200; ++t) {
    const auto land = NkLandscape::generate(12, t % 12, static_cast<std::uint64_t>(t));
    const double f = evaluate(land, Genome::random(12, r));
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
  }
}

TEST(AddGenes, SingleGeneRewiresOne) {
  auto land = NkLandscape::generate(20, 3, 4);
  const auto before = land;
  Rng r(7), gr(8);
  Genome g = Genome::random(20, gr);
  add_genes(land, g, 1, r);
  EXPECT_EQ(land.size(), 21u);
  EXPECT_EQ(g.size(), 21u);
  int changed = 0;
  for (std::size_t i = 0; i < 20; ++i)
    if (!std::equal(land.links(i).begin(), land.links(i).end(), before.links(i).begin())) ++changed;
  EXPECT_EQ(changed, 1);
  ASSERT_EQ(land.history().back().rewires.size(), 1u);
  EXPECT_EQ(land.links(land.history().back().rewires[0].gene)[0], 20u);
}

TEST(AddGenes, K0NoRewiring) {
  auto land = NkLandscape::generate(6, 0, 4);
  Rng r(7);
  Genome g = from_mask(6, 0);
  add_genes(land, g, 5, r);
  EXPECT_EQ(land.size(), 11u);
  EXPECT_TRUE(land.history().back().rewires.empty());
}

TEST(AddGenes, RenormalizesByNewLength) {
  // 3 genes, K=1, explicit tables; add one gene and recompute by hand.
  auto land = NkLandscape::from_tables(1, {{1}, {2}, {0}},
                                       {{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}, {0.9, 0.15, 0.25, 0.35}});
  Genome g = from_mask(3, 0b101);
  Rng r(3);
  add_genes(land, g, 1, r);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t idx = g[i] | (std::size_t{g[land.links(i)[0]]} << 1);
    sum += land.table(i)[idx];
  }
  EXPECT_DOUBLE_EQ(evaluate(land, g), sum / 4.0);
}

TEST(AddGenes, OnlyRewiredOrDependentContributionsChange) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto land = NkLandscape::generate(15, 4, seed);
    Rng r(seed + 100), gr(seed + 200);
    Genome g = Genome::random(15, gr);
    std::vector<double> before(15);
    for (std::size_t i = 0; i < 15; ++i) before[i] = land.contribution(i, g);
    add_genes(land, g, 3, r);
    std::set<std::size_t> rewired;
    for (const auto& rw : land.history().back().rewires) rewired.insert(rw.gene);
    for (std::size_t i = 0; i < 15; ++i)
      if (!rewired.count(i)) ASSERT_EQ(land.contribution(i, g), before[i]) << "gene " << i;
  }
}

TEST(RemoveLastBlock, UndoIsExact) {
  auto land = NkLandscape::generate(20, 5, 11);
  Rng r(1), gr(2);
  Genome g = Genome::random(20, gr);
  const auto land0 = land;
  const auto g0 = g;
  const double f0 = evaluate(land, g);
  add_genes(land, g, 1, r);
  ASSERT_TRUE(remove_last_block(land, g));
  EXPECT_EQ(land, land0);
  EXPECT_EQ(g, g0);
  EXPECT_EQ(evaluate(land, g), f0);
}

TEST(RemoveLastBlock, LifoRestoresIntermediateStates) {
  auto land = NkLandscape::generate(10, 3, 12);
  Rng r(1), gr(2);
  Genome g = Genome::random(10, gr);
  const auto l0 = land;
  const auto g0 = g;
  add_genes(land, g, 2, r);
  const auto l1 = land;
  const auto g1 = g;
  add_genes(land, g, 3, r);
  remove_last_block(land, g);
  EXPECT_EQ(land, l1);
  EXPECT_EQ(g, g1);
  remove_last_block(land, g);
  EXPECT_EQ(land, l0);
  EXPECT_EQ(g, g0);
}

TEST(RemoveLastBlock, EmptyHistoryIsNoOp) {
  auto land = NkLandscape::generate(5, 2, 1);
  Genome g = from_mask(5, 3);
  const auto l0 = land;
  EXPECT_FALSE(remove_last_block(land, g).has_value());
  EXPECT_EQ(land, l0);
}

TEST(RemoveLastBlock, RestoreReappliesBlock) {
  auto land = NkLandscape::generate(10, 3, 12);
  Rng r(1), gr(2);
  Genome g = Genome::random(10, gr);
  add_genes(land, g, 2, r);
  const auto grown = land;
  const auto gg = g;
  auto block = remove_last_block(land, g);
  restore_block(land, g, std::move(*block));
  EXPECT_EQ(land, grown);
  EXPECT_EQ(g, gg);
}

TEST(BruteForce, SingleGene) {
  const auto land = NkLandscape::from_tables(0, {{}}, {{0.2, 0.8}});
  const auto opt = brute_force_optimum(land);
  EXPECT_EQ(opt.genome.alleles, (std::vector<std::uint8_t>{1}));
  EXPECT_DOUBLE_EQ(opt.fitness, 0.8);
}

TEST(BruteForce, K0IsPerGeneArgmax) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto land = NkLandscape::generate(10, 0, seed);
    double sum = 0.0;
    for (std::size_t i = 0; i < 10; ++i) sum += std::max(land.table(i)[0], land.table(i)[1]);
    EXPECT_NEAR(brute_force_optimum(land).fitness, sum / 10.0, 1e-15);
  }
}

TEST(BruteForce, K0OptimumMeanIsTwoThirds) {
  // E[max of two uniforms] = 2/3.
  double total = 0.0;
  const int reps = 2000;
  for (int s = 0; s < reps; ++s) total += brute_force_optimum(NkLandscape::generate(10, 0, s)).fitness;
  EXPECT_NEAR(total / reps, 2.0 / 3.0, 0.005);
}

TEST(BruteForce, RejectsLargeLandscapes) {
  EXPECT_THROW(brute_force_optimum(NkLandscape::generate(21, 1, 1)), std::length_error);
}

TEST(LocalOptimum, K0ArgmaxAndNonArgmax) {
  const auto land = NkLandscape::from_tables(0, {{}, {}, {}}, {{0.1, 0.9}, {0.7, 0.3}, {0.5, 0.6}});
  EXPECT_TRUE(is_local_optimum(land, from_mask(3, 0b101)));
  EXPECT_FALSE(is_local_optimum(land, from_mask(3, 0b100)));
}

TEST(LocalOptimum, AgreesWithNeighbourScanN10) {
  Rng r(5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto land = NkLandscape::generate(10, seed % 10, seed);
    const Genome g = Genome::random(10, r);
    const double f = oracle_fitness(land, g);
    bool peak = true;
    for (std::size_t i = 0; i < 10; ++i) {
      Genome h = g;
      h.flip(i);
      if (oracle_fitness(land, h) > f) peak = false;
    }
    ASSERT_EQ(is_local_optimum(land, g), peak);
  }
}

TEST(Serialization, RoundTripWithHistory) {
  auto land = NkLandscape::generate(12, 3, 77);
  Rng r(3), gr(4);
  Genome g = Genome::random(12, gr);
  add_genes(land, g, 2, r);
  add_genes(land, g, 1, r);
  std::stringstream ss;
  save_landscape(ss, land);
  const auto back = load_landscape(ss);
  EXPECT_EQ(back, land);
  EXPECT_EQ(evaluate(back, g), evaluate(land, g));
}

TEST(Serialization, ExplicitTablesRoundTrip) {
  const auto land = NkLandscape::from_tables(1, {{1}, {0}}, {{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}});
  std::stringstream ss;
  save_landscape(ss, land);
  EXPECT_EQ(load_landscape(ss), land);
}

TEST(Serialization, WrongMagicRejected) {
  std::stringstream ss("XXXX garbage");
  EXPECT_THROW(load_landscape(ss), io::FormatError);
}
