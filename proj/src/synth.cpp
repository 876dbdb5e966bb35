#include "csi/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "csi/error.hpp"
#include "csi/random.hpp"

namespace csi::synth {

namespace {

// Chain-internal fragments, each with an element or bond pattern the others
// lack.
constexpr std::array<const char*, 12> kMotifs{
    "c1ccccc1", "C(=O)N", "S(=O)(=O)", "P(=O)(O)", "C#C", "C(F)(F)",
    "N=N", "C1CCOCC1", "C(Cl)", "C(Br)", "c1ccncc1", "C(=S)",
};
constexpr std::array<const char*, 8> kPrefixes{"C", "CC", "CCC", "OC", "NC", "CCO", "CN", "OCC"};
constexpr std::array<const char*, 8> kSuffixes{"", "C", "CC", "CO", "CN", "C(C)C", "CCC", "OC"};
// Secondary decorations, one per sub-group.
constexpr std::array<const char*, 6> kSubMotifs{"C(F)", "C(Cl)", "C(Br)", "C(I)", "C(C#N)", "C(=S)"};
constexpr const char* kResidues = "ACDEFGHIKLMNPQRSTVWY";

std::string block_motif(int block) {
  const int n = static_cast<int>(kMotifs.size());
  if (block < n) return kMotifs[static_cast<std::size_t>(block)];
  int index = block - n;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (index-- == 0) return std::string(kMotifs[static_cast<std::size_t>(i)]) + "C" + kMotifs[static_cast<std::size_t>(j)];
    }
  }
  throw Error(ErrorKind::ConfigError, "too many blocks for the motif table");
}

std::string id(char kind, int block, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%02d_%03d", kind, block, index);
  return buf;
}

std::string random_residues(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(kResidues[uniform_index(rng, 20)]);
  return s;
}

struct Population {
  std::vector<std::vector<data::Id>> compounds;  // per block
  std::vector<std::vector<data::Id>> sequences;
  std::vector<std::vector<std::vector<data::Id>>> compound_groups;  // [block][subgroup]
  std::vector<std::vector<std::vector<data::Id>>> sequence_groups;
  std::vector<data::Id> all_sequences;
};

std::string unique_motif(Rng& rng, std::size_t n, std::set<std::string>& seen) {
  std::string m;
  do {
    m = random_residues(rng, n);
  } while (!seen.insert(m).second);
  return m;
}

Population populate(const SynthSpec& spec, Rng& rng, SynthBundle& out, std::map<data::Id, std::string>& compounds,
                    std::map<data::Id, std::string>& sequences) {
  Population pop;
  const auto nb = static_cast<std::size_t>(spec.blocks);
  const auto ng = static_cast<std::size_t>(spec.subgroups);
  pop.compounds.resize(nb);
  pop.sequences.resize(nb);
  pop.compound_groups.assign(nb, std::vector<std::vector<data::Id>>(ng));
  pop.sequence_groups.assign(nb, std::vector<std::vector<data::Id>>(ng));
  std::set<std::string> seen_smiles;
  std::set<std::string> seen_motifs;
  for (int b = 0; b < spec.blocks; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    const std::string motif = block_motif(b);
    for (int i = 0; i < spec.compounds_per_block; ++i) {
      const int g = i % spec.subgroups;
      std::string smiles;
      for (int attempt = 0;; ++attempt) {
        smiles = std::string(kPrefixes[uniform_index(rng, kPrefixes.size())]) + motif +
                 (spec.subgroups > 1 ? kSubMotifs[static_cast<std::size_t>(g)] : "") +
                 kSuffixes[uniform_index(rng, kSuffixes.size())];
        // Exhausted decorations: lengthen the chain until the string is new.
        if (attempt > 32) smiles += std::string(static_cast<std::size_t>(attempt - 32), 'C');
        if (seen_smiles.insert(smiles).second) break;
      }
      const auto cid = id('c', b, i);
      compounds.emplace(cid, smiles);
      out.compound_block.emplace(cid, b);
      out.compound_subgroup.emplace(cid, g);
      pop.compounds[bi].push_back(cid);
      pop.compound_groups[bi][static_cast<std::size_t>(g)].push_back(cid);
    }
    const std::string residue_motif = unique_motif(rng, 8, seen_motifs);
    std::vector<std::string> sub_motifs;
    for (int g = 0; g < spec.subgroups; ++g) sub_motifs.push_back(unique_motif(rng, 5, seen_motifs));
    for (int i = 0; i < spec.sequences_per_block; ++i) {
      const int g = i % spec.subgroups;
      const auto span = static_cast<std::size_t>(spec.max_length - spec.min_length + 1);
      const std::size_t length = static_cast<std::size_t>(spec.min_length) + uniform_index(rng, span);
      std::string residues = random_residues(rng, length);
      // Block motif in the first half, sub-group motif in the second, so
      // neither overwrites the other.
      const std::size_t half = length / 2;
      const std::size_t copies = 1 + uniform_index(rng, 2);
      for (std::size_t c = 0; c < copies; ++c) {
        const std::size_t at = uniform_index(rng, half - residue_motif.size() + 1);
        residues.replace(at, residue_motif.size(), residue_motif);
      }
      if (spec.subgroups > 1) {
        const auto& sub = sub_motifs[static_cast<std::size_t>(g)];
        const std::size_t at = half + uniform_index(rng, length - half - sub.size() + 1);
        residues.replace(at, sub.size(), sub);
      }
      const auto sid = id('s', b, i);
      sequences.emplace(sid, residues);
      out.sequence_block.emplace(sid, b);
      out.sequence_subgroup.emplace(sid, g);
      pop.sequences[bi].push_back(sid);
      pop.sequence_groups[bi][static_cast<std::size_t>(g)].push_back(sid);
      pop.all_sequences.push_back(sid);
    }
  }
  return pop;
}

/// One partner: own sub-group with probability 1 - noise, otherwise any
/// sequence. Exhausted pools fall back to the block, then to everything.
data::Id draw_partner(const SynthSpec& spec, Rng& rng, const Population& pop, int block, int group,
                      const std::set<data::Id>& used) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool cross = coin(rng) < spec.noise;
  const auto bi = static_cast<std::size_t>(block);
  std::vector<const std::vector<data::Id>*> pools;
  if (!cross) {
    pools.push_back(&pop.sequence_groups[bi][static_cast<std::size_t>(group)]);
    pools.push_back(&pop.sequences[bi]);
  }
  pools.push_back(&pop.all_sequences);
  for (const auto* pool : pools) {
    std::vector<data::Id> free;
    for (const auto& s : *pool) {
      if (!used.contains(s)) free.push_back(s);
    }
    if (!free.empty()) return free[uniform_index(rng, free.size())];
  }
  throw Error(ErrorKind::ConfigError, "no unused sequence left to draw");
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
  if (blocks < 2) fail("blocks must be at least 2");
  if (blocks > 78) fail("at most 78 blocks are supported");
  if (compounds_per_block < 1 || sequences_per_block < 1) fail("blocks need at least one compound and one sequence");
  if (subgroups < 1 || subgroups > static_cast<int>(kSubMotifs.size())) fail("subgroups must lie in [1, 6]");
  if (subgroups > compounds_per_block || subgroups > sequences_per_block) {
    fail("subgroups cannot exceed the compounds or sequences per block");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must lie in [0, 1]");
  if (min_length < 8 || max_length < min_length) fail("sequence lengths need 8 <= min_length <= max_length");
  if (!reactions) {
    if (partners_per_compound < 1 || partners_per_compound > blocks * sequences_per_block) {
      fail("partners_per_compound must lie in [1, blocks * sequences_per_block]");
    }
  } else {
    if (reactions_per_block < 1) fail("reactions_per_block must be at least 1");
    if (compounds_per_block < 2) fail("reaction mode needs at least two compounds per block");
  }
}

SynthBundle synthesize(const SynthSpec& spec) {
  spec.validate();
  SynthBundle out;
  Rng rng(mix_seed(spec.seed, {0x73796e}));
  std::map<data::Id, std::string> compounds, sequences;
  const Population pop = populate(spec, rng, out, compounds, sequences);

  if (!spec.reactions) {
    out.interactions.compounds = compounds;
    out.interactions.sequences = sequences;
    for (int b = 0; b < spec.blocks; ++b) {
      for (const auto& c : pop.compounds[static_cast<std::size_t>(b)]) {
        const int g = out.compound_subgroup.at(c);
        std::set<data::Id> used;
        for (int k = 0; k < spec.partners_per_compound; ++k) used.insert(draw_partner(spec, rng, pop, b, g, used));
        for (const auto& s : used) out.interactions.positives.emplace(c, s);
      }
    }
    return out;
  }

  data::ReactionSet rs;
  rs.compounds = compounds;
  rs.sequences = sequences;
  int serial = 0;
  for (int b = 0; b < spec.blocks; ++b) {
    for (int i = 0; i < spec.reactions_per_block; ++i) {
      const int g = i % spec.subgroups;
      const auto& group = pop.compound_groups[static_cast<std::size_t>(b)][static_cast<std::size_t>(g)];
      const auto& members = group.size() >= 2 ? group : pop.compounds[static_cast<std::size_t>(b)];
      data::Reaction r;
      char rid[32];
      std::snprintf(rid, sizeof rid, "R%05d", serial++);
      r.id = rid;
      std::vector<data::Id> pick(members);
      std::shuffle(pick.begin(), pick.end(), rng);
      const std::size_t n_react = 1 + uniform_index(rng, std::min<std::size_t>(2, pick.size() - 1));
      const std::size_t n_prod = 1 + uniform_index(rng, std::min<std::size_t>(2, pick.size() - n_react));
      r.reactants.insert(pick.begin(), pick.begin() + static_cast<long>(n_react));
      r.products.insert(pick.begin() + static_cast<long>(n_react), pick.begin() + static_cast<long>(n_react + n_prod));
      const std::size_t n_enz = 1 + uniform_index(rng, 2);
      for (std::size_t e = 0; e < n_enz; ++e) r.enzymes.insert(draw_partner(spec, rng, pop, b, g, r.enzymes));
      r.rclass.insert("RC" + std::to_string(b) + "_" + std::to_string(g));
      r.ec.insert(std::to_string(b + 1) + ".1.1." + std::to_string(i % 2 + 1));
      rs.reactions.push_back(std::move(r));
    }
  }
  out.interactions = data::induced_interactions(rs);
  out.reactions = std::move(rs);
  return out;
}

void write_bundle(const SynthBundle& bundle, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  data::save_interactions(bundle.interactions, directory / "interactions.tsv");
  std::ofstream blocks(directory / "blocks.tsv", std::ios::binary);
  if (!blocks) throw Error(ErrorKind::IoError, "cannot write blocks.tsv in " + directory.string());
  blocks << "kind\tid\tblock\n";
  for (const auto& [id, b] : bundle.compound_block) blocks << "compound\t" << id << '\t' << b << '\n';
  for (const auto& [id, b] : bundle.sequence_block) blocks << "sequence\t" << id << '\t' << b << '\n';
  if (bundle.reactions) data::save_reactions(*bundle.reactions, directory / "reactions");
}

}  // namespace csi::synth
