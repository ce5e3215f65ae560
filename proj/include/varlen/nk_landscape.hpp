#pragma once

// NK fitness landscapes with appendable, undoable gene blocks.
//
// Each gene i owns k link targets and a lookup table of 2^(k+1) fitness
// values in [0, 1). The table index packs the gene's own allele into bit 0
// and the allele of links[j] into bit j+1.
//
// Generated tables are never materialized: a gene stores a 64-bit key and
// entry t is the t-th output of the SplitMix64 stream seeded with that key,
// mapped to [0, 1). This keeps a K=15 gene at 8 bytes of table state, which
// matters once walks append thousands of trial genes. Tests and fixtures may
// instead supply explicit tables.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "varlen/binary_io.hpp"
#include "varlen/random.hpp"

namespace varlen {

/// Binary allele vector. Length tracks the landscape's current gene count.
struct Genome {
  std::vector<std::uint8_t> alleles;

  std::size_t size() const noexcept { return alleles.size(); }
  std::uint8_t operator[](std::size_t i) const { return alleles[i]; }
  void flip(std::size_t i) { alleles[i] ^= 1u; }

  bool operator==(const Genome&) const = default;

  static Genome random(std::size_t n, Rng& rng) {
    Genome g;
    g.alleles.resize(n);
    for (auto& a : g.alleles) a = static_cast<std::uint8_t>(rng.below(2));
    return g;
  }
};

/// One existing gene whose first link was redirected to a new gene.
struct Rewire {
  std::uint32_t gene;
  std::uint32_t prior_target;
  std::uint32_t new_target;
  bool operator==(const Rewire&) const = default;
};

struct GrowthRecord {
  std::uint32_t block_size = 0;
  std::vector<Rewire> rewires;  // in application order
  bool operator==(const GrowthRecord&) const = default;
};

class NkLandscape;

/// Everything needed to re-apply a block taken off by remove_last_block.
struct RemovedBlock {
  struct GeneState {
    std::uint64_t table_key = 0;
    std::vector<double> explicit_table;
    std::vector<std::uint32_t> links;
    bool operator==(const GeneState&) const = default;
  };
  std::vector<GeneState> genes;
  std::vector<std::uint8_t> alleles;
  GrowthRecord record;
};

class NkLandscape {
 public:
  using GeneState = RemovedBlock::GeneState;

  /// Random landscape: for each gene in index order, draw k distinct link
  /// targets from the other genes, then a 64-bit table key.
  static NkLandscape generate(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("NK landscape needs at least one gene");
    if (k >= n) throw std::invalid_argument("k must be smaller than n (got n=" + std::to_string(n) +
                                            ", k=" + std::to_string(k) + ")");
    if (k > kMaxK) throw std::invalid_argument("k exceeds supported maximum");
    NkLandscape land(n, k, seed);
    Rng rng(seed);
    land.genes_.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      land.genes_[i].links = sample_distinct(rng, static_cast<std::uint32_t>(n), k, i);
      land.genes_[i].table_key = rng.next();
    }
    return land;
  }

  /// Landscape with caller-supplied links and tables (fixtures, oracles).
  static NkLandscape from_tables(std::size_t k, std::vector<std::vector<std::uint32_t>> links,
                                 std::vector<std::vector<double>> tables) {
    const std::size_t n = tables.size();
    if (n == 0) throw std::invalid_argument("NK landscape needs at least one gene");
    if (links.size() != n) throw std::invalid_argument("links/tables size mismatch");
    if (k >= n || k > kMaxK) throw std::invalid_argument("k must be smaller than n");
    NkLandscape land(n, k, 0);
    land.genes_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (tables[i].size() != (std::size_t{1} << (k + 1)))
        throw std::invalid_argument("table " + std::to_string(i) + " must have 2^(k+1) entries");
      for (double v : tables[i])
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("table entries must lie in [0,1]");
      if (links[i].size() != k) throw std::invalid_argument("gene needs exactly k links");
      for (auto t : links[i])
        if (t >= n || t == i) throw std::invalid_argument("invalid link target");
      land.genes_[i].links = std::move(links[i]);
      land.genes_[i].explicit_table = std::move(tables[i]);
    }
    return land;
  }

  std::size_t initial_size() const noexcept { return n0_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return genes_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t table_size() const noexcept { return std::size_t{1} << (k_ + 1); }

  std::span<const std::uint32_t> links(std::size_t gene) const { return genes_.at(gene).links; }
  std::span<const GrowthRecord> history() const noexcept { return history_; }

  double table_entry(std::size_t gene, std::size_t index) const {
    const GeneState& g = genes_[gene];
    if (!g.explicit_table.empty()) return g.explicit_table[index];
    return to_unit(splitmix_at(g.table_key, index));
  }

  std::vector<double> table(std::size_t gene) const {
    std::vector<double> t(table_size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = table_entry(gene, i);
    return t;
  }

  std::size_t table_index(std::size_t gene, const Genome& genome) const {
    const GeneState& g = genes_[gene];
    std::size_t idx = genome.alleles[gene];
    for (std::size_t j = 0; j < g.links.size(); ++j)
      idx |= std::size_t{genome.alleles[g.links[j]]} << (j + 1);
    return idx;
  }

  double contribution(std::size_t gene, const Genome& genome) const {
    return table_entry(gene, table_index(gene, genome));
  }

  const GeneState& gene_state(std::size_t gene) const { return genes_.at(gene); }

  bool operator==(const NkLandscape&) const = default;

  static constexpr std::size_t kMaxK = 30;

 private:
  NkLandscape(std::size_t n0, std::size_t k, std::uint64_t seed) : n0_(n0), k_(k), seed_(seed) {}

  friend void add_genes(NkLandscape&, Genome&, std::size_t, Rng&);
  friend std::optional<RemovedBlock> remove_last_block(NkLandscape&, Genome&);
  friend void restore_block(NkLandscape&, Genome&, RemovedBlock);
  friend void save_landscape(std::ostream&, const NkLandscape&);
  friend NkLandscape load_landscape(std::istream&);

  std::size_t n0_;
  std::size_t k_;
  std::uint64_t seed_;
  std::vector<GeneState> genes_;
  std::vector<GrowthRecord> history_;
};

inline void check_length(const NkLandscape& land, const Genome& genome) {
  if (genome.size() != land.size())
    throw std::invalid_argument("genome length " + std::to_string(genome.size()) +
                                " does not match landscape size " + std::to_string(land.size()));
}

/// Mean of per-gene table contributions, summed in gene order.
inline double evaluate(const NkLandscape& land, const Genome& genome) {
  check_length(land, genome);
  double sum = 0.0;
  for (std::size_t i = 0; i < land.size(); ++i) sum += land.contribution(i, genome);
  return sum / static_cast<double>(land.size());
}

/// Appends g genes to the right-hand end.
///
/// Draw order: for each new gene, its table key then its allele; then for
/// each new gene in order, its k links (distinct, over the whole enlarged
/// genome, self excluded) followed, when k >= 1, by the index of the
/// pre-existing gene whose first link is redirected to it.
inline void add_genes(NkLandscape& land, Genome& genome, std::size_t g, Rng& rng) {
  check_length(land, genome);
  if (g == 0) throw std::invalid_argument("add_genes: block size must be at least 1");
  const auto old_size = static_cast<std::uint32_t>(land.size());
  const auto new_size = static_cast<std::uint32_t>(old_size + g);
  GrowthRecord rec;
  rec.block_size = static_cast<std::uint32_t>(g);
  land.genes_.resize(new_size);
  genome.alleles.resize(new_size);
  for (std::uint32_t i = old_size; i < new_size; ++i) {
    land.genes_[i].table_key = rng.next();
    genome.alleles[i] = static_cast<std::uint8_t>(rng.below(2));
  }
  for (std::uint32_t i = old_size; i < new_size; ++i) {
    land.genes_[i].links = sample_distinct(rng, new_size, land.k_, i);
    if (land.k_ >= 1) {
      const auto target = static_cast<std::uint32_t>(rng.below(old_size));
      auto& first = land.genes_[target].links.front();
      rec.rewires.push_back({target, first, i});
      first = i;
    }
  }
  land.history_.push_back(std::move(rec));
}

/// Undoes the most recent growth block. Returns nullopt when there is
/// nothing to remove.
inline std::optional<RemovedBlock> remove_last_block(NkLandscape& land, Genome& genome) {
  check_length(land, genome);
  if (land.history_.empty()) return std::nullopt;
  RemovedBlock out;
  out.record = std::move(land.history_.back());
  land.history_.pop_back();
  for (auto it = out.record.rewires.rbegin(); it != out.record.rewires.rend(); ++it)
    land.genes_[it->gene].links.front() = it->prior_target;
  const std::size_t keep = land.size() - out.record.block_size;
  out.genes.assign(std::make_move_iterator(land.genes_.begin() + static_cast<std::ptrdiff_t>(keep)),
                   std::make_move_iterator(land.genes_.end()));
  out.alleles.assign(genome.alleles.begin() + static_cast<std::ptrdiff_t>(keep), genome.alleles.end());
  land.genes_.resize(keep);
  genome.alleles.resize(keep);
  return out;
}

/// Re-applies a block previously taken off by remove_last_block.
inline void restore_block(NkLandscape& land, Genome& genome, RemovedBlock block) {
  check_length(land, genome);
  for (auto& g : block.genes) land.genes_.push_back(std::move(g));
  genome.alleles.insert(genome.alleles.end(), block.alleles.begin(), block.alleles.end());
  for (const Rewire& r : block.record.rewires) land.genes_[r.gene].links.front() = r.new_target;
  land.history_.push_back(std::move(block.record));
}

struct Optimum {
  Genome genome;
  double fitness;
};

/// Exhaustive search over all 2^N genomes; first maximum in counting order.
inline Optimum brute_force_optimum(const NkLandscape& land) {
  constexpr std::size_t kMaxGenes = 20;
  const std::size_t n = land.size();
  if (n > kMaxGenes)
    throw std::length_error("brute_force_optimum: " + std::to_string(n) +
                            " genes is too many for exhaustive enumeration");
  Genome g;
  g.alleles.assign(n, 0);
  Optimum best{g, evaluate(land, g)};
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t mask = 1; mask < count; ++mask) {
    for (std::size_t i = 0; i < n; ++i) g.alleles[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
    const double f = evaluate(land, g);
    if (f > best.fitness) best = {g, f};
  }
  return best;
}

/// True iff no single-allele flip gives strictly greater fitness.
inline bool is_local_optimum(const NkLandscape& land, const Genome& genome) {
  const double f = evaluate(land, genome);
  Genome probe = genome;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe.flip(i);
    const bool better = evaluate(land, probe) > f;
    probe.flip(i);
    if (better) return false;
  }
  return true;
}

// Serialization. Layout documented in docs/formats.md.

inline constexpr std::string_view kLandscapeMagic = "VLNK";
inline constexpr std::uint32_t kLandscapeVersion = 1;

inline void save_landscape(std::ostream& os, const NkLandscape& land) {
  io::write_magic(os, kLandscapeMagic, kLandscapeVersion);
  io::write_u64(os, land.n0_);
  io::write_u64(os, land.k_);
  io::write_u64(os, land.seed_);
  io::write_u64(os, land.genes_.size());
  for (const auto& g : land.genes_) {
    const bool expl = !g.explicit_table.empty();
    io::write_u8(os, expl ? 1 : 0);
    if (expl) {
      for (double v : g.explicit_table) io::write_f64(os, v);
    } else {
      io::write_u64(os, g.table_key);
    }
    for (auto t : g.links) io::write_u32(os, t);
  }
  io::write_u64(os, land.history_.size());
  for (const auto& rec : land.history_) {
    io::write_u32(os, rec.block_size);
    io::write_u64(os, rec.rewires.size());
    for (const auto& r : rec.rewires) {
      io::write_u32(os, r.gene);
      io::write_u32(os, r.prior_target);
      io::write_u32(os, r.new_target);
    }
  }
  if (!os) throw std::runtime_error("failed writing landscape");
}

inline NkLandscape load_landscape(std::istream& is) {
  io::expect_magic(is, kLandscapeMagic, kLandscapeVersion);
  const auto n0 = io::read_u64(is);
  const auto k = io::read_u64(is);
  const auto seed = io::read_u64(is);
  if (k > NkLandscape::kMaxK || n0 == 0 || k >= n0) throw io::FormatError("invalid n0/k");
  NkLandscape land(n0, k, seed);
  const auto count = io::read_count(is, std::uint64_t{1} << 24, "gene");
  if (count < n0) throw io::FormatError("fewer genes than n0");
  land.genes_.resize(count);
  for (auto& g : land.genes_) {
    const auto kind = io::read_u8(is);
    if (kind == 1) {
      g.explicit_table.resize(land.table_size());
      for (auto& v : g.explicit_table) v = io::read_f64(is);
    } else if (kind == 0) {
      g.table_key = io::read_u64(is);
    } else {
      throw io::FormatError("unknown table kind");
    }
    g.links.resize(k);
    for (auto& t : g.links) {
      t = io::read_u32(is);
      if (t >= count) throw io::FormatError("link target out of range");
    }
  }
  const auto depth = io::read_count(is, count, "history");
  land.history_.resize(depth);
  std::uint64_t grown = 0;
  for (auto& rec : land.history_) {
    rec.block_size = io::read_u32(is);
    grown += rec.block_size;
    rec.rewires.resize(io::read_count(is, count, "rewire"));
    for (auto& r : rec.rewires) {
      r.gene = io::read_u32(is);
      r.prior_target = io::read_u32(is);
      r.new_target = io::read_u32(is);
    }
  }
  if (n0 + grown != count) throw io::FormatError("history does not account for gene count");
  return land;
}

}  // namespace varlen
