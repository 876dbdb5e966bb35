#include "csi/chemio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "csi/error.hpp"

namespace csi::chemio {

namespace {

struct ElementInfo {
  std::string_view symbol;
  double mass;
};

// Standard atomic weights (conventional values), Z = 1..118.
constexpr std::array<ElementInfo, 118> kPeriodicTable{{
    {"H", 1.008},     {"He", 4.0026},  {"Li", 6.94},    {"Be", 9.0122},  {"B", 10.81},    {"C", 12.011},
    {"N", 14.007},    {"O", 15.999},   {"F", 18.998},   {"Ne", 20.180},  {"Na", 22.990},  {"Mg", 24.305},
    {"Al", 26.982},   {"Si", 28.085},  {"P", 30.974},   {"S", 32.06},    {"Cl", 35.45},   {"Ar", 39.948},
    {"K", 39.098},    {"Ca", 40.078},  {"Sc", 44.956},  {"Ti", 47.867},  {"V", 50.942},   {"Cr", 51.996},
    {"Mn", 54.938},   {"Fe", 55.845},  {"Co", 58.933},  {"Ni", 58.693},  {"Cu", 63.546},  {"Zn", 65.38},
    {"Ga", 69.723},   {"Ge", 72.630},  {"As", 74.922},  {"Se", 78.971},  {"Br", 79.904},  {"Kr", 83.798},
    {"Rb", 85.468},   {"Sr", 87.62},   {"Y", 88.906},   {"Zr", 91.224},  {"Nb", 92.906},  {"Mo", 95.95},
    {"Tc", 98.0},     {"Ru", 101.07},  {"Rh", 102.91},  {"Pd", 106.42},  {"Ag", 107.87},  {"Cd", 112.41},
    {"In", 114.82},   {"Sn", 118.71},  {"Sb", 121.76},  {"Te", 127.60},  {"I", 126.90},   {"Xe", 131.29},
    {"Cs", 132.91},   {"Ba", 137.33},  {"La", 138.91},  {"Ce", 140.12},  {"Pr", 140.91},  {"Nd", 144.24},
    {"Pm", 145.0},    {"Sm", 150.36},  {"Eu", 151.96},  {"Gd", 157.25},  {"Tb", 158.93},  {"Dy", 162.50},
    {"Ho", 164.93},   {"Er", 167.26},  {"Tm", 168.93},  {"Yb", 173.05},  {"Lu", 174.97},  {"Hf", 178.49},
    {"Ta", 180.95},   {"W", 183.84},   {"Re", 186.21},  {"Os", 190.23},  {"Ir", 192.22},  {"Pt", 195.08},
    {"Au", 196.97},   {"Hg", 200.59},  {"Tl", 204.38},  {"Pb", 207.2},   {"Bi", 208.98},  {"Po", 209.0},
    {"At", 210.0},    {"Rn", 222.0},   {"Fr", 223.0},   {"Ra", 226.0},   {"Ac", 227.0},   {"Th", 232.04},
    {"Pa", 231.04},   {"U", 238.03},   {"Np", 237.0},   {"Pu", 244.0},   {"Am", 243.0},   {"Cm", 247.0},
    {"Bk", 247.0},    {"Cf", 251.0},   {"Es", 252.0},   {"Fm", 257.0},   {"Md", 258.0},   {"No", 259.0},
    {"Lr", 262.0},    {"Rf", 267.0},   {"Db", 268.0},   {"Sg", 269.0},   {"Bh", 270.0},   {"Hs", 277.0},
    {"Mt", 278.0},    {"Ds", 281.0},   {"Rg", 282.0},   {"Cn", 285.0},   {"Nh", 286.0},   {"Fl", 289.0},
    {"Mc", 290.0},    {"Lv", 293.0},   {"Ts", 294.0},   {"Og", 294.0},
}};

const ElementInfo* find_element(std::string_view symbol) {
  for (const auto& e : kPeriodicTable) {
    if (e.symbol == symbol) return &e;
  }
  return nullptr;
}

Element classify(std::string_view symbol) {
  static const std::map<std::string_view, Element> kOrganic{
      {"B", Element::B}, {"C", Element::C}, {"N", Element::N},   {"O", Element::O},   {"P", Element::P},
      {"S", Element::S}, {"F", Element::F}, {"Cl", Element::Cl}, {"Br", Element::Br}, {"I", Element::I}};
  auto it = kOrganic.find(symbol);
  return it == kOrganic.end() ? Element::Other : it->second;
}

/// Allowed valences for implicit-hydrogen assignment; empty for non-organic.
std::vector<int> default_valences(Element e) {
  switch (e) {
    case Element::B: return {3};
    case Element::C: return {4};
    case Element::N: return {3, 5};
    case Element::O: return {2};
    case Element::P: return {3, 5};
    case Element::S: return {2, 4, 6};
    case Element::F:
    case Element::Cl:
    case Element::Br:
    case Element::I: return {1};
    case Element::Other: return {};
  }
  return {};
}

int bond_order_units(BondType t) {
  switch (t) {
    case BondType::Single: return 2;
    case BondType::Double: return 4;
    case BondType::Triple: return 6;
    case BondType::Aromatic: return 3;
  }
  return 2;
}

struct PendingAtom {
  AtomFeatures features;
  bool bracket = false;
  int explicit_h = 0;
};

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : text_(text) {}

  MolecularGraph parse() {
    if (text_.empty()) throw Error(ErrorKind::EmptyInput, "empty SMILES");
    while (pos_ < text_.size()) step();
    if (pending_bond_) fail("dangling bond at end of input");
    if (!branches_.empty()) fail("unbalanced '(': branch not closed");
    if (!open_rings_.empty()) fail("ring bond " + std::to_string(open_rings_.begin()->first) + " not closed");
    if (atoms_.empty()) throw Error(ErrorKind::EmptyInput, "SMILES contains no atoms");
    return finish();
  }

 private:
  struct OpenRing {
    int atom;
    std::optional<char> bond;
  };

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::SyntaxError, what + " at position " + std::to_string(pos_) + " in '" + std::string(text_) + "'");
  }

  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '(':
        if (prev_ < 0) fail("branch without a preceding atom");
        if (pending_bond_) fail("bond symbol before '('");
        if (text_[pos_ - 1] == '(') fail("branch must start with an atom");
        branches_.push_back(prev_);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) fail("unbalanced ')'");
        if (pending_bond_) fail("dangling bond before ')'");
        if (prev_ == branches_.back() && text_[pos_ - 1] == '(') fail("empty branch");
        prev_ = branches_.back();
        branches_.pop_back();
        ++pos_;
        return;
      case '.':
        if (pending_bond_) fail("dangling bond before '.'");
        if (prev_ < 0) fail("'.' without a preceding atom");
        prev_ = -1;
        ++pos_;
        return;
      case '-':
      case '=':
      case '#':
      case ':':
      case '/':
      case '\\':
        if (prev_ < 0) fail("bond symbol without a preceding atom");
        if (pending_bond_) fail("two consecutive bond symbols");
        pending_bond_ = c;
        ++pos_;
        return;
      case '%': {
        if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
          fail("'%' must be followed by two digits");
        }
        const int number = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
        pos_ += 3;
        ring_closure(number);
        return;
      }
      case '[':
        add_atom(parse_bracket_atom());
        return;
      default:
        break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      ring_closure(c - '0');
      return;
    }
    add_atom(parse_organic_atom());
  }

  PendingAtom parse_organic_atom() {
    PendingAtom atom;
    const char c = text_[pos_];
    std::string symbol;
    if ((c == 'C' && peek(1) == 'l') || (c == 'B' && peek(1) == 'r')) {
      symbol = text_.substr(pos_, 2);
      pos_ += 2;
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      symbol = std::string(1, c);
      ++pos_;
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      symbol = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      atom.features.aromatic = true;
      ++pos_;
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
    atom.features.symbol = symbol;
    atom.features.element = classify(symbol);
    atom.features.atomic_mass = find_element(symbol)->mass;
    return atom;
  }

  PendingAtom parse_bracket_atom() {
    const std::size_t start = pos_;
    ++pos_;  // '['
    PendingAtom atom;
    atom.bracket = true;

    int isotope = 0;
    bool has_isotope = false;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      isotope = isotope * 10 + (text_[pos_++] - '0');
      has_isotope = true;
    }

    if (pos_ >= text_.size()) fail("unterminated bracket atom");
    std::string symbol;
    const char c = text_[pos_];
    if (std::islower(static_cast<unsigned char>(c))) {
      // Aromatic forms: b c n o p s se as te.
      if ((c == 's' && peek(1) == 'e') || (c == 'a' && peek(1) == 's') || (c == 't' && peek(1) == 'e')) {
        symbol = {static_cast<char>(std::toupper(static_cast<unsigned char>(c))), text_[pos_ + 1]};
        pos_ += 2;
      } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
        symbol = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        ++pos_;
      } else {
        fail(std::string("unknown aromatic element '") + c + "'");
      }
      atom.features.aromatic = true;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      if (std::islower(static_cast<unsigned char>(peek(1))) && find_element(text_.substr(pos_, 2))) {
        symbol = text_.substr(pos_, 2);
        pos_ += 2;
      } else {
        symbol = std::string(1, c);
        ++pos_;
      }
    } else {
      fail("missing element symbol in bracket atom");
    }
    const ElementInfo* info = find_element(symbol);
    if (info == nullptr) fail("unknown element symbol '" + symbol + "'");
    atom.features.symbol = symbol;
    atom.features.element = classify(symbol);
    atom.features.atomic_mass = has_isotope ? static_cast<double>(isotope) : info->mass;

    if (peek(0) == '@') {
      ++pos_;
      if (peek(0) == '@') {
        ++pos_;
        atom.features.chirality = Chirality::Clockwise;
      } else if (std::isupper(static_cast<unsigned char>(peek(0))) && peek(0) != 'H') {
        // @TH1, @AL2, @SP3, @TB12, @OH25 ...
        pos_ += 2;
        while (std::isdigit(static_cast<unsigned char>(peek(0)))) ++pos_;
        atom.features.chirality = Chirality::Other;
      } else {
        atom.features.chirality = Chirality::CounterClockwise;
      }
    }

    if (peek(0) == 'H') {
      ++pos_;
      atom.explicit_h = 1;
      if (std::isdigit(static_cast<unsigned char>(peek(0)))) atom.explicit_h = text_[pos_++] - '0';
    }

    if (peek(0) == '+' || peek(0) == '-') {
      const char sign = text_[pos_++];
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(peek(0)))) {
        magnitude = 0;
        while (std::isdigit(static_cast<unsigned char>(peek(0)))) magnitude = magnitude * 10 + (text_[pos_++] - '0');
      } else {
        while (peek(0) == sign) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.features.formal_charge = sign == '+' ? magnitude : -magnitude;
    }

    if (peek(0) == ':') {
      ++pos_;
      if (!std::isdigit(static_cast<unsigned char>(peek(0)))) fail("atom class needs digits");
      while (std::isdigit(static_cast<unsigned char>(peek(0)))) ++pos_;
    }

    if (peek(0) != ']') fail("malformed bracket atom starting at " + std::to_string(start));
    ++pos_;
    return atom;
  }

  char peek(std::size_t offset) const {
    return pos_ + offset < text_.size() ? text_[pos_ + offset] : '\0';
  }

  void add_atom(PendingAtom atom) {
    const int index = static_cast<int>(atoms_.size());
    atoms_.push_back(std::move(atom));
    if (prev_ >= 0) {
      add_bond(prev_, index, pending_bond_);
    }
    pending_bond_.reset();
    prev_ = index;
  }

  void ring_closure(int number) {
    if (prev_ < 0) fail("ring bond without a preceding atom");
    auto it = open_rings_.find(number);
    if (it == open_rings_.end()) {
      open_rings_[number] = OpenRing{prev_, pending_bond_};
      pending_bond_.reset();
      return;
    }
    std::optional<char> symbol = pending_bond_;
    if (it->second.bond) {
      if (symbol && *symbol != *it->second.bond && !is_directional(*symbol) && !is_directional(*it->second.bond)) {
        fail("conflicting ring-bond symbols");
      }
      if (!symbol) symbol = it->second.bond;
    }
    const int other = it->second.atom;
    open_rings_.erase(it);
    pending_bond_.reset();
    add_bond(other, prev_, symbol);
  }

  static bool is_directional(char c) { return c == '/' || c == '\\'; }

  void add_bond(int a, int b, std::optional<char> symbol) {
    if (a == b) fail("self-loop bond");
    for (const auto& bond : bonds_) {
      if ((bond.begin == a && bond.end == b) || (bond.begin == b && bond.end == a)) fail("duplicate bond");
    }
    Bond bond;
    bond.begin = a;
    bond.end = b;
    const bool both_aromatic = atoms_[a].features.aromatic && atoms_[b].features.aromatic;
    if (!symbol) {
      bond.features.type = both_aromatic ? BondType::Aromatic : BondType::Single;
    } else {
      switch (*symbol) {
        case '=': bond.features.type = BondType::Double; break;
        case '#': bond.features.type = BondType::Triple; break;
        case ':': bond.features.type = BondType::Aromatic; break;
        case '/': bond.features.stereo = BondStereo::Up; break;
        case '\\': bond.features.stereo = BondStereo::Down; break;
        default: bond.features.type = BondType::Single; break;
      }
    }
    bonds_.push_back(bond);
  }

  MolecularGraph finish() {
    const int n = static_cast<int>(atoms_.size());
    std::vector<std::vector<int>> incident(static_cast<std::size_t>(n));
    for (int i = 0; i < static_cast<int>(bonds_.size()); ++i) {
      incident[bonds_[i].begin].push_back(i);
      incident[bonds_[i].end].push_back(i);
    }

    mark_ring_bonds(incident);

    // Double bonds whose both ends carry a directional single bond.
    for (auto& bond : bonds_) {
      if (bond.features.type != BondType::Double) continue;
      auto has_directional = [&](int atom) {
        for (int bi : incident[atom]) {
          const auto s = bonds_[bi].features.stereo;
          if (s == BondStereo::Up || s == BondStereo::Down) return true;
        }
        return false;
      };
      if (has_directional(bond.begin) && has_directional(bond.end)) bond.features.stereo = BondStereo::DoubleBondStereo;
    }

    // Conjugation: aromatic bonds, multiple bonds adjacent through a single
    // bond to another multiple bond, and the single bonds joining them.
    auto has_multiple = [&](int atom, int except) {
      for (int bi : incident[atom]) {
        if (bi == except) continue;
        if (bonds_[bi].features.type != BondType::Single) return true;
      }
      return false;
    };
    std::vector<bool> conjugated(bonds_.size(), false);
    for (std::size_t i = 0; i < bonds_.size(); ++i) {
      const auto& b = bonds_[i];
      if (b.features.type == BondType::Aromatic) {
        conjugated[i] = true;
      } else if (b.features.type == BondType::Single && has_multiple(b.begin, static_cast<int>(i)) &&
                 has_multiple(b.end, static_cast<int>(i))) {
        conjugated[i] = true;
      }
    }
    for (std::size_t i = 0; i < bonds_.size(); ++i) {
      const auto& b = bonds_[i];
      if (b.features.type != BondType::Double && b.features.type != BondType::Triple) continue;
      for (int atom : {b.begin, b.end}) {
        for (int bi : incident[atom]) {
          if (bonds_[bi].features.type == BondType::Single && conjugated[bi]) conjugated[i] = true;
        }
      }
    }
    for (std::size_t i = 0; i < bonds_.size(); ++i) bonds_[i].features.conjugated = conjugated[i];

    MolecularGraph graph;
    graph.bonds = bonds_;
    graph.atoms.reserve(atoms_.size());
    for (int i = 0; i < n; ++i) {
      PendingAtom& pa = atoms_[i];
      AtomFeatures f = pa.features;
      int units = 0;  // bond order in half-units
      bool in_ring = false;
      for (int bi : incident[i]) {
        units += bond_order_units(bonds_[bi].features.type);
        in_ring = in_ring || bonds_[bi].features.in_ring;
      }
      f.in_ring = in_ring;
      f.degree = static_cast<int>(incident[i].size());

      // Aromatic bonds count as 1 for hydrogen assignment, plus one for the
      // atom's share of the pi system.
      int used = 0;
      for (int bi : incident[i]) {
        const auto t = bonds_[bi].features.type;
        used += t == BondType::Aromatic ? 1 : bond_order_units(t) / 2;
      }
      if (f.aromatic) used += 1;

      if (pa.bracket) {
        f.num_hydrogens = pa.explicit_h;
        const auto allowed = default_valences(f.element);
        if (!allowed.empty() && f.formal_charge == 0) {
          f.radical_electrons = std::max(0, allowed.front() - (used + pa.explicit_h));
        }
      } else {
        const auto allowed = default_valences(f.element);
        int h = 0;
        for (int v : allowed) {
          if (v >= used) {
            h = v - used;
            break;
          }
        }
        f.num_hydrogens = h;
      }
      f.valence = static_cast<int>(std::lround(units / 2.0)) + f.num_hydrogens;
      graph.atoms.push_back(std::move(f));
    }
    return graph;
  }

  // Bridge detection; every non-bridge bond lies on a cycle.
  void mark_ring_bonds(const std::vector<std::vector<int>>& incident) {
    const int n = static_cast<int>(atoms_.size());
    std::vector<int> disc(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
    std::vector<bool> bridge(bonds_.size(), false);
    int timer = 0;
    std::function<void(int, int)> dfs = [&](int u, int parent_bond) {
      disc[u] = low[u] = timer++;
      for (int bi : incident[u]) {
        if (bi == parent_bond) continue;
        const int v = bonds_[bi].begin == u ? bonds_[bi].end : bonds_[bi].begin;
        if (disc[v] < 0) {
          dfs(v, bi);
          low[u] = std::min(low[u], low[v]);
          if (low[v] > disc[u]) bridge[bi] = true;
        } else {
          low[u] = std::min(low[u], disc[v]);
        }
      }
    };
    for (int u = 0; u < n; ++u) {
      if (disc[u] < 0) dfs(u, -1);
    }
    for (std::size_t i = 0; i < bonds_.size(); ++i) bonds_[i].features.in_ring = !bridge[i];
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int prev_ = -1;
  std::optional<char> pending_bond_;
  std::vector<int> branches_;
  std::map<int, OpenRing> open_rings_;
  std::vector<PendingAtom> atoms_;
  std::vector<Bond> bonds_;
};

template <typename Enum>
void one_hot(Eigen::RowVectorXd& v, int& offset, Enum value, int width) {
  v(offset + std::clamp(static_cast<int>(value), 0, width - 1)) = 1.0;
  offset += width;
}

}  // namespace

std::vector<std::pair<int, int>> MolecularGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(bonds.size());
  for (const auto& b : bonds) out.emplace_back(b.begin, b.end);
  return out;
}

int MolecularGraph::component_count() const {
  std::vector<int> parent(atoms.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  int components = static_cast<int>(atoms.size());
  for (const auto& b : bonds) {
    const int ra = find(b.begin), rb = find(b.end);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components;
}

Eigen::RowVectorXd atom_feature_vector(const AtomFeatures& atom) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(kAtomFeatureWidth);
  int offset = 0;
  one_hot(v, offset, atom.element, kElementCount);
  v(offset++) = atom.atomic_mass / 100.0;
  one_hot(v, offset, atom.valence, kMaxValence + 1);
  v(offset++) = atom.in_ring ? 1.0 : 0.0;
  v(offset++) = static_cast<double>(atom.formal_charge);
  v(offset++) = static_cast<double>(atom.radical_electrons);
  one_hot(v, offset, atom.chirality, kChiralityCount);
  one_hot(v, offset, atom.degree, kMaxDegree + 1);
  one_hot(v, offset, atom.num_hydrogens, kMaxHydrogens + 1);
  v(offset++) = atom.aromatic ? 1.0 : 0.0;
  return v;
}

Eigen::RowVectorXd bond_feature_vector(const BondFeatures& bond) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(kBondFeatureWidth);
  int offset = 0;
  one_hot(v, offset, bond.type, kBondTypeCount);
  v(offset++) = bond.in_ring ? 1.0 : 0.0;
  v(offset++) = bond.conjugated ? 1.0 : 0.0;
  one_hot(v, offset, bond.stereo, kBondStereoCount);
  return v;
}

Eigen::MatrixXd atom_feature_matrix(const MolecularGraph& graph) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(graph.atoms.size()), kAtomFeatureWidth);
  for (std::size_t i = 0; i < graph.atoms.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = atom_feature_vector(graph.atoms[i]);
  return m;
}

MolecularGraph parse_smiles(std::string_view smiles) { return SmilesParser(smiles).parse(); }

// ---------------------------------------------------------------------------

int residue_code(char residue) {
  const int upper = std::toupper(static_cast<unsigned char>(residue));
  if (upper < 'A' || upper > 'Z') {
    throw Error(ErrorKind::UnknownResidue, std::string("'") + residue + "' is not an amino-acid symbol");
  }
  return upper - 'A' + 1;
}

char residue_from_code(int code) {
  if (code < 1 || code > kAlphabetSize) throw Error(ErrorKind::UnknownResidue, "code " + std::to_string(code));
  return static_cast<char>('A' + code - 1);
}

EncodedSequence encode_fasta(std::string_view residues, std::size_t length) {
  if (residues.empty()) throw Error(ErrorKind::EmptyInput, "empty sequence");
  if (length == 0) throw Error(ErrorKind::ShapeMismatch, "sequence length must be positive");
  EncodedSequence out;
  out.original_length = residues.size();
  out.codes.assign(length, 0);
  // Validate the whole input, not only the retained prefix.
  for (std::size_t i = 0; i < residues.size(); ++i) {
    const int code = residue_code(residues[i]);
    if (i < length) out.codes[i] = code;
  }
  return out;
}

std::string decode_fasta(const EncodedSequence& encoded) {
  std::string out;
  for (int code : encoded.codes) {
    if (code == 0) break;
    out.push_back(residue_from_code(code));
  }
  return out;
}

}  // namespace csi::chemio
