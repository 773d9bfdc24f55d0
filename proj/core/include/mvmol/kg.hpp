#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvmol/error.hpp"
#include "mvmol/molecule.hpp"
#include "mvmol/rng.hpp"

namespace mvmol {

enum class EntityKind { Mol, Text };

struct EntityRef {
  EntityKind kind;
  std::string id;

  bool operator==(const EntityRef& o) const { return kind == o.kind && id == o.id; }
};

/// (head, relation, tail). The relation is a phrase, carried inline and
/// tokenized like any other text when a batch is encoded.
struct Triplet {
  EntityRef head;
  std::string relation;
  EntityRef tail;
};

enum class TripletCategory { MolText, MolMol, TextText };

const char* category_name(TripletCategory c);

/// (Mol,Text) -> MolText, (Mol,Mol) -> MolMol, (Text,Text) -> TextText.
/// The Text->Mol orientation is rejected rather than flipped: no loss ever
/// consumes it and silent inversion would hide data bugs.
TripletCategory categorize(const Triplet& t);

/// Text registry entry. mol_id and view are set for molecule-linked view
/// texts and empty for free-standing texts (ontology nodes etc.).
struct TextEntry {
  std::string id;
  std::string text;
  std::string mol_id;
  std::string view;
};

std::vector<TextEntry> load_texts(const std::string& path);
void write_texts(const std::vector<TextEntry>& texts, const std::string& path);

/// Immutable typed triplet store with entity registries.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// TSV with columns head_kind, head_id, relation, tail_kind, tail_id
  /// (no header). Duplicates collapse; dangling entity ids are an error.
  static KnowledgeGraph ingest(const std::string& tsv_path, const std::vector<Molecule>& mols,
                               const std::vector<TextEntry>& texts);

  static KnowledgeGraph from_triplets(std::vector<Triplet> triplets,
                                      const std::vector<Molecule>& mols,
                                      const std::vector<TextEntry>& texts);

  int size() const { return static_cast<int>(triplets_.size()); }
  const Triplet& triplet(int i) const { return triplets_[static_cast<size_t>(i)]; }
  const std::vector<Triplet>& triplets() const { return triplets_; }

  int count(TripletCategory c) const;
  const std::vector<int>& indices_of(TripletCategory c) const;

  bool has_mol(const std::string& id) const { return mol_index_.count(id) > 0; }
  bool has_text(const std::string& id) const { return text_index_.count(id) > 0; }
  const Molecule& mol(const std::string& id) const;
  const std::string& text(const std::string& id) const;
  int mol_count() const { return static_cast<int>(mols_.size()); }
  int text_count() const { return static_cast<int>(texts_.size()); }

  /// Entity / relation tally in a two-section table, one "<name> <count>"
  /// row per line plus an All row per section.
  std::string stats_table() const;

  void write_tsv(const std::string& path) const;

 private:
  void index();

  std::vector<Triplet> triplets_;
  std::vector<Molecule> mols_;
  std::vector<TextEntry> texts_;
  std::unordered_map<std::string, int> mol_index_;
  std::unordered_map<std::string, int> text_index_;
  std::vector<int> by_category_[3];
};

/// View of one triplet with both entities resolved against the registries.
struct ResolvedTriplet {
  TripletCategory category;
  const Molecule* head_mol = nullptr;
  const std::string* head_text = nullptr;
  std::string relation;
  const Molecule* tail_mol = nullptr;
  const std::string* tail_text = nullptr;
};

ResolvedTriplet resolve(const KnowledgeGraph& kg, const Triplet& t);

/// Uniform without-replacement sampling: a fresh permutation per epoch,
/// optionally restricted to one category.
class TripletSampler {
 public:
  TripletSampler(const KnowledgeGraph& kg, Rng rng,
                 std::optional<TripletCategory> filter = std::nullopt);

  /// Next batch of triplet indices into kg. Reshuffles when the epoch is
  /// exhausted; a batch never spans two epochs unless batch_size exceeds the
  /// pool, which is an error.
  std::vector<int> next(int batch_size);

  int pool_size() const { return static_cast<int>(pool_.size()); }

 private:
  const KnowledgeGraph* kg_;
  Rng rng_;
  std::vector<int> pool_;
  std::vector<int> order_;
  size_t cursor_ = 0;
};

}  // namespace mvmol
