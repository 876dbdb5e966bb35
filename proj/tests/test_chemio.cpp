#include <gtest/gtest.h>

#include <random>
#include <set>

#include "csi/chemio.hpp"
#include "csi/error.hpp"

using namespace csi;
using namespace csi::chemio;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::ConfigError;
}

}  // namespace

TEST(Smiles, Ethanol) {
  const auto g = parse_smiles("CCO");
  ASSERT_EQ(g.atom_count(), 3u);
  EXPECT_EQ(g.atoms[0].element, Element::C);
  EXPECT_EQ(g.atoms[1].element, Element::C);
  EXPECT_EQ(g.atoms[2].element, Element::O);
  ASSERT_EQ(g.bonds.size(), 2u);
  for (const auto& a : g.atoms) EXPECT_FALSE(a.in_ring);
  for (const auto& b : g.bonds) EXPECT_FALSE(b.features.in_ring);
  EXPECT_EQ(g.atoms[0].num_hydrogens, 3);
  EXPECT_EQ(g.atoms[1].num_hydrogens, 2);
  EXPECT_EQ(g.atoms[2].num_hydrogens, 1);
  EXPECT_EQ(g.atoms[1].degree, 2);
}

TEST(Smiles, Cyclopropane) {
  const auto g = parse_smiles("C1CC1");
  ASSERT_EQ(g.atom_count(), 3u);
  ASSERT_EQ(g.bonds.size(), 3u);
  for (const auto& a : g.atoms) EXPECT_TRUE(a.in_ring);
  for (const auto& b : g.bonds) EXPECT_TRUE(b.features.in_ring);
}

TEST(Smiles, SyntaxErrors) {
  for (const char* bad : {"C(", "C)", "C1CC", "C=", "Xx", "C((C))", "[C", "(C)"}) {
    EXPECT_EQ(kind_of([&] { parse_smiles(bad); }), ErrorKind::SyntaxError) << bad;
  }
  EXPECT_EQ(kind_of([] { parse_smiles(""); }), ErrorKind::EmptyInput);
}

TEST(Smiles, RingOnlyPartOfMolecule) {
  // Methylcyclohexane: the methyl carbon and its bond are outside the ring.
  const auto g = parse_smiles("CC1CCCCC1");
  ASSERT_EQ(g.atom_count(), 7u);
  EXPECT_FALSE(g.atoms[0].in_ring);
  for (std::size_t i = 1; i < 7; ++i) EXPECT_TRUE(g.atoms[i].in_ring);
  EXPECT_FALSE(g.bonds[0].features.in_ring);
}

TEST(Smiles, AromaticAndBrackets) {
  const auto benzene = parse_smiles("c1ccccc1");
  ASSERT_EQ(benzene.atom_count(), 6u);
  for (const auto& a : benzene.atoms) {
    EXPECT_TRUE(a.aromatic);
    EXPECT_EQ(a.num_hydrogens, 1);
  }
  for (const auto& b : benzene.bonds) {
    EXPECT_EQ(b.features.type, BondType::Aromatic);
    EXPECT_TRUE(b.features.conjugated);
  }
  const auto ammonium = parse_smiles("[NH4+]");
  EXPECT_EQ(ammonium.atoms[0].formal_charge, 1);
  EXPECT_EQ(ammonium.atoms[0].num_hydrogens, 4);
  const auto chiral = parse_smiles("N[C@@H](C)C(=O)O");
  EXPECT_EQ(chiral.atoms[1].chirality, Chirality::Clockwise);
  const auto percent = parse_smiles("C%10CC%10");
  EXPECT_EQ(percent.bonds.size(), 3u);
  const auto stereo = parse_smiles("F/C=C/F");
  EXPECT_EQ(stereo.bonds[1].features.stereo, BondStereo::DoubleBondStereo);
  EXPECT_EQ(parse_smiles("ClCBr").atoms[0].element, Element::Cl);
  EXPECT_EQ(parse_smiles("[Na+].[Cl-]").component_count(), 2);
}

TEST(Smiles, GraphInvariants) {
  for (const char* s : {"CCO", "c1ccccc1O", "CC(=O)Nc1ccc(O)cc1", "OC(=O)C1CCOCC1", "C#N", "[Na+].[Cl-]", "CS(=O)(=O)N"}) {
    const auto g = parse_smiles(s);
    std::set<std::pair<int, int>> seen;
    for (const auto& b : g.bonds) {
      EXPECT_NE(b.begin, b.end);
      EXPECT_LT(b.begin, static_cast<int>(g.atom_count()));
      EXPECT_LT(b.end, static_cast<int>(g.atom_count()));
      EXPECT_TRUE(seen.insert({std::min(b.begin, b.end), std::max(b.begin, b.end)}).second) << s;
    }
    const auto m = atom_feature_matrix(g);
    EXPECT_EQ(m.cols(), kAtomFeatureWidth);
    for (const auto& b : g.bonds) EXPECT_EQ(bond_feature_vector(b.features).size(), kBondFeatureWidth);
    // Element one-hot block sums to exactly 1.
    for (Eigen::Index r = 0; r < m.rows(); ++r) EXPECT_EQ(m.row(r).head(kElementCount).sum(), 1.0);
    // Determinism.
    const auto again = parse_smiles(s);
    EXPECT_EQ(atom_feature_matrix(again), m);
    EXPECT_EQ(again.edges(), g.edges());
  }
}

TEST(Smiles, TreePropertyWithoutRingDigits) {
  std::mt19937_64 rng(5);
  const char* atoms[] = {"C", "N", "O", "S", "Cl", "c"};
  for (int trial = 0; trial < 200; ++trial) {
    // Random acyclic chains with branches and disconnected fragments.
    std::string s = "C";
    int open = 0;
    for (int i = 0; i < 12; ++i) {
      const int r = static_cast<int>(rng() % 10);
      if (r == 0) {
        s += "(";
        ++open;
        s += "C";
      } else if (r == 1 && open > 0) {
        s += ")";
        --open;
      } else if (r == 2 && open == 0) {
        s += ".C";
      } else {
        s += atoms[rng() % 5];
      }
    }
    while (open-- > 0) s += ")";
    const auto g = parse_smiles(s);
    EXPECT_EQ(g.bonds.size(), g.atom_count() - static_cast<std::size_t>(g.component_count())) << s;
  }
}

TEST(Fasta, EncodeAndPad) {
  const auto e = encode_fasta("MKV", 5);
  ASSERT_EQ(e.codes.size(), 5u);
  EXPECT_EQ(e.codes[0], residue_code('M'));
  EXPECT_EQ(e.codes[1], residue_code('K'));
  EXPECT_EQ(e.codes[2], residue_code('V'));
  EXPECT_EQ(e.codes[3], 0);
  EXPECT_EQ(e.codes[4], 0);
  EXPECT_EQ(e.original_length, 3u);
  EXPECT_EQ(encode_fasta("mkv", 5).codes, e.codes);
}

TEST(Fasta, Truncation) {
  const std::string long_seq(1200, 'A');
  const auto e = encode_fasta(long_seq, 1000);
  EXPECT_EQ(e.codes.size(), 1000u);
  EXPECT_EQ(e.original_length, 1200u);
  EXPECT_EQ(encode_fasta(long_seq).codes.size(), static_cast<std::size_t>(kDefaultSequenceLength));
}

TEST(Fasta, Errors) {
  EXPECT_EQ(kind_of([] { encode_fasta("MK9", 5); }), ErrorKind::UnknownResidue);
  EXPECT_EQ(kind_of([] { encode_fasta("", 5); }), ErrorKind::EmptyInput);
}

TEST(Fasta, RoundTripAndCodeRange) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::string s;
    const std::size_t n = 1 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('A' + rng() % 26));
    const std::size_t L = 1 + rng() % 40;
    const auto e = encode_fasta(s, L);
    for (std::size_t i = 0; i < e.codes.size(); ++i) {
      EXPECT_GE(e.codes[i], 0);
      EXPECT_LE(e.codes[i], kAlphabetSize);
      if (i >= std::min(n, L)) EXPECT_EQ(e.codes[i], 0);
    }
    EXPECT_EQ(decode_fasta(e), s.substr(0, std::min(n, L)));
  }
}
