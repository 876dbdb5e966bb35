#pragma once

// SMILES -> featurized molecular graph, FASTA residues -> fixed-length codes.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace csi::chemio {

/// One-hot element vocabulary: the organic subset plus a catch-all.
enum class Element : std::uint8_t { B, C, N, O, P, S, F, Cl, Br, I, Other };
inline constexpr int kElementCount = 11;

enum class Chirality : std::uint8_t { Unspecified, CounterClockwise, Clockwise, Other };
inline constexpr int kChiralityCount = 4;

enum class BondType : std::uint8_t { Single, Double, Triple, Aromatic };
inline constexpr int kBondTypeCount = 4;

/// Directional single bonds ('/' and '\') and double bonds flanked by them.
enum class BondStereo : std::uint8_t { None, Up, Down, DoubleBondStereo };
inline constexpr int kBondStereoCount = 4;

struct AtomFeatures {
  Element element = Element::Other;
  std::string symbol;
  double atomic_mass = 0.0;
  int valence = 0;
  bool in_ring = false;
  int formal_charge = 0;
  int radical_electrons = 0;
  Chirality chirality = Chirality::Unspecified;
  int degree = 0;
  int num_hydrogens = 0;
  bool aromatic = false;
};

struct BondFeatures {
  BondType type = BondType::Single;
  bool in_ring = false;
  bool conjugated = false;
  BondStereo stereo = BondStereo::None;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondFeatures features;
};

struct MolecularGraph {
  std::vector<AtomFeatures> atoms;
  std::vector<Bond> bonds;

  std::size_t atom_count() const { return atoms.size(); }
  std::vector<std::pair<int, int>> edges() const;
  /// Number of connected components ('.'-separated fragments).
  int component_count() const;
};

/// Widths of the fixed feature schema.
inline constexpr int kMaxValence = 6;
inline constexpr int kMaxDegree = 5;
inline constexpr int kMaxHydrogens = 4;
inline constexpr int kAtomFeatureWidth =
    kElementCount + 1 + (kMaxValence + 1) + 1 + 1 + 1 + kChiralityCount + (kMaxDegree + 1) + (kMaxHydrogens + 1) + 1;
inline constexpr int kBondFeatureWidth = kBondTypeCount + 1 + 1 + kBondStereoCount;

Eigen::RowVectorXd atom_feature_vector(const AtomFeatures& atom);
Eigen::RowVectorXd bond_feature_vector(const BondFeatures& bond);
/// One row per atom.
Eigen::MatrixXd atom_feature_matrix(const MolecularGraph& graph);

/// Parses the supported SMILES subset. Throws Error{SyntaxError|EmptyInput}.
MolecularGraph parse_smiles(std::string_view smiles);

// ---------------------------------------------------------------------------

/// 20 standard amino acids plus B, Z, J, U, O, X: every Latin letter.
inline constexpr int kAlphabetSize = 26;
inline constexpr int kDefaultSequenceLength = 1000;

struct EncodedSequence {
  std::vector<int> codes;
  std::size_t original_length = 0;
};

/// Code for one residue letter (case-insensitive), in [1, kAlphabetSize].
int residue_code(char residue);
char residue_from_code(int code);

/// Throws Error{UnknownResidue|EmptyInput}.
EncodedSequence encode_fasta(std::string_view residues, std::size_t length = kDefaultSequenceLength);
/// Strips padding and maps codes back to upper-case letters.
std::string decode_fasta(const EncodedSequence& encoded);

}  // namespace csi::chemio
