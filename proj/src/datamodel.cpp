#include "csi/datamodel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "csi/chemio.hpp"
#include "csi/error.hpp"
#include "csi/random.hpp"

namespace csi::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.filename().string() + " line " + std::to_string(line);
}

void define(std::map<Id, std::string>& table, const Id& id, const std::string& value, const std::string& context) {
  if (value.empty()) return;
  auto [it, inserted] = table.emplace(id, value);
  if (!inserted && it->second != value) {
    throw Error(ErrorKind::SchemaError, context + ": conflicting redefinition of '" + id + "'");
  }
}

// Validates SMILES/FASTA text, attaching the source location to any error.
void check_entities(const std::map<Id, std::string>& compounds, const std::map<Id, std::string>& sequences,
                    const std::map<Id, std::string>& origin) {
  for (const auto& [id, smiles] : compounds) {
    try {
      chemio::parse_smiles(smiles);
    } catch (const Error& e) {
      auto it = origin.find("c:" + id);
      throw Error(e.kind(), (it != origin.end() ? it->second + ": " : std::string()) + "compound '" + id + "': " + e.what());
    }
  }
  for (const auto& [id, fasta] : sequences) {
    try {
      chemio::encode_fasta(fasta, 1);
    } catch (const Error& e) {
      auto it = origin.find("s:" + id);
      throw Error(e.kind(), (it != origin.end() ? it->second + ": " : std::string()) + "sequence '" + id + "': " + e.what());
    }
  }
}

std::map<Id, std::string> load_table(const fs::path& path, const char* value_column,
                                     std::map<Id, std::string>& origin, const char* prefix) {
  std::ifstream in = open_input(path);
  std::map<Id, std::string> table;
  std::string line;
  std::size_t number = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (header) {
      header = false;
      if (fields.size() != 2 || fields[0] != "id" || fields[1] != value_column) {
        throw Error(ErrorKind::SchemaError, where(path, number) + ": expected header 'id\\t" + value_column + "'");
      }
      continue;
    }
    if (fields.size() != 2) {
      throw Error(ErrorKind::SchemaError, where(path, number) + ": expected 2 columns, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw Error(ErrorKind::SchemaError, where(path, number) + ": empty field");
    define(table, fields[0], fields[1], where(path, number));
    origin.emplace(std::string(prefix) + fields[0], where(path, number));
  }
  if (header) throw Error(ErrorKind::SchemaError, path.string() + ": missing header");
  return table;
}

std::set<std::string> string_set(const nlohmann::json& value, const std::string& context, const char* field) {
  std::set<std::string> out;
  if (value.is_null()) return out;
  if (!value.is_array()) throw Error(ErrorKind::SchemaError, context + ": '" + field + "' must be an array");
  for (const auto& v : value) {
    if (!v.is_string() || v.get<std::string>().empty()) {
      throw Error(ErrorKind::SchemaError, context + ": '" + field + "' entries must be non-empty strings");
    }
    out.insert(v.get<std::string>());
  }
  return out;
}

InteractionSet restricted(const InteractionSet& source, std::set<Pair> positives, std::set<Pair> negatives) {
  InteractionSet out;
  out.compounds = source.compounds;
  out.sequences = source.sequences;
  out.positives = std::move(positives);
  out.labeled_negatives = std::move(negatives);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void InteractionSet::validate() const {
  auto check = [this](const Pair& p, const char* what) {
    if (!compounds.contains(p.first)) {
      throw Error(ErrorKind::DanglingReference, std::string(what) + " references unknown compound '" + p.first + "'");
    }
    if (!sequences.contains(p.second)) {
      throw Error(ErrorKind::DanglingReference, std::string(what) + " references unknown sequence '" + p.second + "'");
    }
  };
  for (const auto& p : positives) check(p, "positive");
  for (const auto& p : labeled_negatives) {
    check(p, "labeled negative");
    if (positives.contains(p)) {
      throw Error(ErrorKind::SchemaError, "pair (" + p.first + ", " + p.second + ") is both positive and negative");
    }
  }
}

InteractionSet induced_interactions(const ReactionSet& reactions) {
  InteractionSet out;
  out.compounds = reactions.compounds;
  out.sequences = reactions.sequences;
  for (const auto& r : reactions.reactions) {
    for (const auto* side : {&r.reactants, &r.products}) {
      for (const auto& c : *side) {
        for (const auto& s : r.enzymes) out.positives.emplace(c, s);
      }
    }
  }
  return out;
}

InteractionSet load_interactions(const fs::path& path, LoadReport* report) {
  std::ifstream in = open_input(path);
  InteractionSet data;
  LoadReport local;
  std::map<Id, std::string> origin;
  std::vector<std::pair<Pair, std::size_t>> references;
  std::string line;
  std::size_t number = 0;
  bool header = true;
  static const std::vector<std::string> kHeader{"compound_id", "smiles", "sequence_id", "fasta", "label"};

  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (header) {
      header = false;
      if (fields != kHeader) {
        throw Error(ErrorKind::SchemaError,
                    where(path, number) + ": expected header 'compound_id\\tsmiles\\tsequence_id\\tfasta\\tlabel'");
      }
      continue;
    }
    const std::string at = where(path, number);
    if (fields.size() != kHeader.size()) {
      throw Error(ErrorKind::SchemaError, at + ": expected 5 columns, got " + std::to_string(fields.size()));
    }
    const Id& compound = fields[0];
    const Id& sequence = fields[2];
    if (compound.empty() || sequence.empty()) throw Error(ErrorKind::SchemaError, at + ": empty id");
    define(data.compounds, compound, fields[1], at);
    define(data.sequences, sequence, fields[3], at);
    if (!fields[1].empty()) origin.emplace("c:" + compound, at);
    if (!fields[3].empty()) origin.emplace("s:" + sequence, at);

    Pair pair{compound, sequence};
    ++local.rows;
    if (fields[4] == "1") {
      if (!data.positives.insert(pair).second) ++local.duplicates;
    } else if (fields[4] == "0") {
      if (!data.labeled_negatives.insert(pair).second) ++local.duplicates;
    } else {
      throw Error(ErrorKind::SchemaError, at + ": label must be 0 or 1, got '" + fields[4] + "'");
    }
    references.emplace_back(std::move(pair), number);
  }
  if (header) throw Error(ErrorKind::SchemaError, path.string() + ": missing header");

  for (const auto& [pair, line_no] : references) {
    if (!data.compounds.contains(pair.first)) {
      throw Error(ErrorKind::DanglingReference, where(path, line_no) + ": compound '" + pair.first + "' is never defined");
    }
    if (!data.sequences.contains(pair.second)) {
      throw Error(ErrorKind::DanglingReference, where(path, line_no) + ": sequence '" + pair.second + "' is never defined");
    }
  }
  for (const auto& p : data.labeled_negatives) {
    if (data.positives.contains(p)) {
      throw Error(ErrorKind::SchemaError, path.filename().string() + ": pair (" + p.first + ", " + p.second +
                                              ") labeled both 1 and 0");
    }
  }
  check_entities(data.compounds, data.sequences, origin);

  local.positives = data.positives.size();
  local.labeled_negatives = data.labeled_negatives.size();
  local.compounds = data.compounds.size();
  local.sequences = data.sequences.size();
  if (report) *report = local;
  return data;
}

void save_interactions(const InteractionSet& data, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "compound_id\tsmiles\tsequence_id\tfasta\tlabel\n";
  std::set<Id> compound_written, sequence_written;
  auto emit = [&](const Pair& p, int label) {
    const bool c_new = compound_written.insert(p.first).second;
    const bool s_new = sequence_written.insert(p.second).second;
    out << p.first << '\t' << (c_new ? data.compounds.at(p.first) : "") << '\t' << p.second << '\t'
        << (s_new ? data.sequences.at(p.second) : "") << '\t' << label << '\n';
  };
  for (const auto& p : data.positives) emit(p, 1);
  for (const auto& p : data.labeled_negatives) emit(p, 0);
}

ReactionSet load_reactions(const fs::path& path) {
  std::ifstream in = open_input(path);
  const fs::path dir = path.parent_path();
  ReactionSet set;
  std::map<Id, std::string> origin;
  set.compounds = load_table(dir / "compounds.tsv", "smiles", origin, "c:");
  set.sequences = load_table(dir / "sequences.tsv", "fasta", origin, "s:");

  std::string line;
  std::size_t number = 0;
  std::set<Id> seen_ids;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string at = where(path, number);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaError, at + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || obj["id"].get<std::string>().empty()) {
      throw Error(ErrorKind::SchemaError, at + ": reaction needs a non-empty string 'id'");
    }
    Reaction r;
    r.id = obj["id"].get<std::string>();
    if (!seen_ids.insert(r.id).second) throw Error(ErrorKind::SchemaError, at + ": duplicate reaction id '" + r.id + "'");
    r.reactants = string_set(obj.value("reactants", nlohmann::json()), at, "reactants");
    r.products = string_set(obj.value("products", nlohmann::json()), at, "products");
    r.enzymes = string_set(obj.value("enzymes", nlohmann::json()), at, "enzymes");
    r.rclass = string_set(obj.value("rclass", nlohmann::json()), at, "rclass");
    r.ec = string_set(obj.value("ec", nlohmann::json()), at, "ec");
    if (r.reactants.empty()) throw Error(ErrorKind::EmptySide, at + ": reaction '" + r.id + "' has no reactants");
    if (r.products.empty()) throw Error(ErrorKind::EmptySide, at + ": reaction '" + r.id + "' has no products");
    if (r.enzymes.empty()) throw Error(ErrorKind::EmptySide, at + ": reaction '" + r.id + "' has no enzymes");
    for (const auto* side : {&r.reactants, &r.products}) {
      for (const auto& c : *side) {
        if (!set.compounds.contains(c)) throw Error(ErrorKind::DanglingReference, at + ": unknown compound '" + c + "'");
      }
    }
    for (const auto& s : r.enzymes) {
      if (!set.sequences.contains(s)) throw Error(ErrorKind::DanglingReference, at + ": unknown sequence '" + s + "'");
    }
    set.reactions.push_back(std::move(r));
  }
  check_entities(set.compounds, set.sequences, origin);
  return set;
}

void save_reactions(const ReactionSet& reactions, const fs::path& directory) {
  fs::create_directories(directory);
  {
    std::ofstream out(directory / "reactions.jsonl", std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write reactions.jsonl in " + directory.string());
    for (const auto& r : reactions.reactions) {
      nlohmann::ordered_json obj;
      obj["id"] = r.id;
      obj["reactants"] = r.reactants;
      obj["products"] = r.products;
      obj["enzymes"] = r.enzymes;
      obj["rclass"] = r.rclass;
      obj["ec"] = r.ec;
      out << obj.dump() << '\n';
    }
  }
  auto write_table = [&](const char* name, const char* column, const std::map<Id, std::string>& table) {
    std::ofstream out(directory / name, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, std::string("cannot write ") + name);
    out << "id\t" << column << '\n';
    for (const auto& [id, value] : table) out << id << '\t' << value << '\n';
  };
  write_table("compounds.tsv", "smiles", reactions.compounds);
  write_table("sequences.tsv", "fasta", reactions.sequences);
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  if (!(train > 0.0) || !(validation > 0.0) || !(test > 0.0)) {
    throw Error(ErrorKind::ConfigError, "split fractions must be positive");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw Error(ErrorKind::ConfigError, "split fractions must sum to 1");
  }
  if (unseen_fraction < 0.0 || unseen_fraction >= 1.0) {
    throw Error(ErrorKind::ConfigError, "unseen fraction must lie in [0, 1)");
  }
}

Split split(const InteractionSet& data, const SplitSpec& spec) {
  spec.validate();
  if (data.positives.size() < 10) {
    throw Error(ErrorKind::TooFewExamples,
                "split needs at least 10 positives, got " + std::to_string(data.positives.size()));
  }
  auto partition = [&spec](const std::set<Pair>& pairs, std::uint64_t salt) {
    std::vector<Pair> order(pairs.begin(), pairs.end());
    Rng rng(mix_seed(spec.seed, {salt}));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(order.size());
    const auto n_val = static_cast<std::size_t>(std::floor(spec.validation * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test * n + 1e-9));
    const std::size_t n_train = order.size() - n_val - n_test;
    std::array<std::set<Pair>, 3> parts;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int bucket = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
      parts[static_cast<std::size_t>(bucket)].insert(order[i]);
    }
    return parts;
  };
  auto pos = partition(data.positives, 1);
  auto neg = partition(data.labeled_negatives, 2);
  return Split{restricted(data, std::move(pos[0]), std::move(neg[0])),
               restricted(data, std::move(pos[1]), std::move(neg[1])),
               restricted(data, std::move(pos[2]), std::move(neg[2]))};
}

UnseenSplit build_unseen_test(const InteractionSet& data, const SplitSpec& spec) {
  spec.validate();
  if (data.positives.empty()) throw Error(ErrorKind::TooFewExamples, "no positives to hold out from");

  std::map<Id, std::size_t> compound_freq, sequence_freq;
  for (const auto& [id, _] : data.compounds) compound_freq[id] = 0;
  for (const auto& [id, _] : data.sequences) sequence_freq[id] = 0;
  for (const auto& [c, s] : data.positives) {
    ++compound_freq[c];
    ++sequence_freq[s];
  }
  auto least_frequent = [&spec](const std::map<Id, std::size_t>& freq) {
    std::vector<std::pair<std::size_t, Id>> order;
    for (const auto& [id, f] : freq) order.emplace_back(f, id);
    std::sort(order.begin(), order.end());
    const auto count = static_cast<std::size_t>(std::ceil(spec.unseen_fraction * static_cast<double>(order.size()) - 1e-9));
    std::set<Id> out;
    for (std::size_t i = 0; i < std::min(count, order.size()); ++i) out.insert(order[i].second);
    return out;
  };

  UnseenSplit out;
  out.held_out_compounds = least_frequent(compound_freq);
  out.held_out_sequences = least_frequent(sequence_freq);
  auto touches = [&out](const Pair& p) {
    return out.held_out_compounds.contains(p.first) || out.held_out_sequences.contains(p.second);
  };

  for (const auto& [id, smiles] : data.compounds) {
    if (!out.held_out_compounds.contains(id)) out.reduced.compounds.emplace(id, smiles);
  }
  for (const auto& [id, fasta] : data.sequences) {
    if (!out.held_out_sequences.contains(id)) out.reduced.sequences.emplace(id, fasta);
  }
  for (const auto& p : data.positives) {
    if (touches(p)) {
      out.unseen.positives.insert(p);
      out.unseen.compounds.emplace(p.first, data.compounds.at(p.first));
      out.unseen.sequences.emplace(p.second, data.sequences.at(p.second));
    } else {
      out.reduced.positives.insert(p);
    }
  }
  for (const auto& p : data.labeled_negatives) {
    if (!touches(p)) {
      out.reduced.labeled_negatives.insert(p);
    } else if (out.unseen.compounds.contains(p.first) && out.unseen.sequences.contains(p.second)) {
      out.unseen.labeled_negatives.insert(p);
    }
  }
  return out;
}

std::vector<LabeledPair> sample_negatives(const InteractionSet& data, int ratio, std::uint64_t seed,
                                          const std::set<Pair>& exclude) {
  if (ratio < 1) throw Error(ErrorKind::ConfigError, "negative ratio must be a positive integer");
  const std::size_t needed = static_cast<std::size_t>(ratio) * data.positives.size();

  std::vector<Id> compounds, sequences;
  for (const auto& [id, _] : data.compounds) compounds.push_back(id);
  for (const auto& [id, _] : data.sequences) sequences.push_back(id);
  const std::size_t grid = compounds.size() * sequences.size();

  auto blocked = [&](const Pair& p) { return data.positives.contains(p) || exclude.contains(p); };
  std::size_t blocked_in_grid = data.positives.size();
  for (const auto& p : exclude) {
    if (!data.positives.contains(p) && data.compounds.contains(p.first) && data.sequences.contains(p.second)) {
      ++blocked_in_grid;
    }
  }
  if (grid < blocked_in_grid + needed) {
    throw Error(ErrorKind::InsufficientNegativeSpace,
                std::to_string(grid - std::min(grid, blocked_in_grid)) + " candidate pairs for " +
                    std::to_string(needed) + " negatives");
  }

  std::vector<LabeledPair> out;
  out.reserve(data.positives.size() + needed);
  for (const auto& [c, s] : data.positives) out.push_back({c, s, 1});

  Rng rng(mix_seed(seed, {0x6e6567}));
  std::set<Pair> taken;
  std::vector<Pair> labeled;
  for (const auto& p : data.labeled_negatives) {
    if (!blocked(p)) labeled.push_back(p);
  }
  std::shuffle(labeled.begin(), labeled.end(), rng);
  for (const auto& p : labeled) {
    if (taken.size() == needed) break;
    taken.insert(p);
    out.push_back({p.first, p.second, 0});
  }

  const std::size_t remaining = needed - taken.size();
  const std::size_t free_cells = grid - blocked_in_grid - taken.size();
  if (remaining == 0) return out;
  if (remaining * 2 > free_cells) {
    // Dense regime: enumerate the free cells and take a seeded prefix.
    std::vector<Pair> cells;
    cells.reserve(free_cells);
    for (const auto& c : compounds) {
      for (const auto& s : sequences) {
        Pair p{c, s};
        if (!blocked(p) && !taken.contains(p)) cells.push_back(std::move(p));
      }
    }
    for (std::size_t i = 0; i < remaining; ++i) {
      std::swap(cells[i], cells[i + uniform_index(rng, cells.size() - i)]);
      out.push_back({cells[i].first, cells[i].second, 0});
    }
    return out;
  }
  while (taken.size() < needed) {
    Pair p{compounds[uniform_index(rng, compounds.size())], sequences[uniform_index(rng, sequences.size())]};
    if (blocked(p) || taken.contains(p)) continue;
    out.push_back({p.first, p.second, 0});
    taken.insert(std::move(p));
  }
  return out;
}

StrataStatistics strata_stats(const std::map<std::string, std::set<Id>>& strata) {
  if (strata.empty()) throw Error(ErrorKind::EmptyInput, "strata_stats needs at least one stratum");
  StrataStatistics out;
  out.strata = strata.size();
  const double n = static_cast<double>(strata.size());
  double total = 0.0;
  out.minimum_size = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> sizes;
  for (const auto& [_, objects] : strata) {
    sizes.push_back(objects.size());
    total += static_cast<double>(objects.size());
    out.maximum_size = std::max(out.maximum_size, objects.size());
    out.minimum_size = std::min(out.minimum_size, objects.size());
  }
  out.average_size = total / n;
  double var = 0.0;
  for (std::size_t s : sizes) var += (static_cast<double>(s) - out.average_size) * (static_cast<double>(s) - out.average_size);
  out.standard_deviation = std::sqrt(var / n);
  if (strata.size() < 2) return out;

  // Only pairs of strata that share an object contribute; find them through
  // an inverted index instead of visiting all n^2 pairs.
  std::vector<const std::set<Id>*> sets;
  for (const auto& [_, objects] : strata) sets.push_back(&objects);
  std::unordered_map<Id, std::vector<std::uint32_t>> containing;
  for (std::uint32_t i = 0; i < sets.size(); ++i) {
    for (const auto& o : *sets[i]) containing[o].push_back(i);
  }
  std::unordered_map<std::uint64_t, std::size_t> shared;
  for (const auto& [_, list] : containing) {
    for (std::size_t a = 0; a < list.size(); ++a) {
      for (std::size_t b = a + 1; b < list.size(); ++b) {
        ++shared[(static_cast<std::uint64_t>(list[a]) << 32) | list[b]];
      }
    }
  }
  double sharing = 0.0, jaccard = 0.0;
  for (const auto& [key, inter] : shared) {
    const auto a = static_cast<std::size_t>(key >> 32), b = static_cast<std::size_t>(key & 0xffffffffu);
    sharing += static_cast<double>(inter);
    jaccard += static_cast<double>(inter) / static_cast<double>(sets[a]->size() + sets[b]->size() - inter);
  }
  const double pairs = n * (n - 1.0) / 2.0;
  out.average_sharing = sharing / pairs;
  out.average_jaccard = jaccard / pairs;
  return out;
}

BaseStatistics base_stats(const InteractionSet& data) {
  BaseStatistics out;
  out.interactions = data.positives.size();
  out.compounds = data.compounds.size();
  out.sequences = data.sequences.size();
  out.compound_to_sequence_ratio =
      out.sequences == 0 ? 0.0 : static_cast<double>(out.compounds) / static_cast<double>(out.sequences);
  return out;
}

}  // namespace csi::data
