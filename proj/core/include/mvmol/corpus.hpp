#pragma once

#include <array>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvmol/kg.hpp"
#include "mvmol/molecule.hpp"
#include "mvmol/rng.hpp"
#include "mvmol/text.hpp"

namespace mvmol {

enum class ViewKind { Chemical, Physical, Pharmacokinetic };

inline constexpr std::array<ViewKind, 3> kAllViews = {
    ViewKind::Chemical, ViewKind::Physical, ViewKind::Pharmacokinetic};

const char* view_name(ViewKind v);    // "chemical" / "physical" / "pharmacokinetic"
const char* view_phrase(ViewKind v);  // the relation phrase, e.g. "chemical view"
ViewKind view_from_name(const std::string& name);

struct CorpusSpec {
  int n_molecules = 64;
  int atoms_min = 4;
  int atoms_max = 12;
  int atom_alphabet = 8;
  uint64_t seed = 1234;
  std::vector<ViewKind> views = {ViewKind::Chemical, ViewKind::Physical,
                                 ViewKind::Pharmacokinetic};
  std::array<double, 3> split_ratio = {7, 1, 2};

  void validate() const;
};

/// Deterministic per-view attribute derivation. Every field is a pure
/// function of the molecular structure; geometric fields are computed on
/// centered coordinates so rigid translation cannot change them.
struct MoleculeAttributes {
  // chemical
  std::vector<int> composition;  // atom-type counts, size atom_alphabet
  int ring_count = 0;
  bool has_type3 = false;
  // physical
  int volume_bucket = 0;
  int spread_bucket = 0;                      // mean pairwise distance
  std::array<int, 3> extent_buckets = {0, 0, 0};  // sorted axis extents
  // pharmacokinetic
  bool atoms_odd = false;
  bool uptake_high = false;  // atom count threshold
  int type3_count = 0;
  int atom_count = 0;
  int bond_count = 0;
  int max_degree = 0;
};

MoleculeAttributes derive_attributes(const Molecule& m, int atom_alphabet);

/// Deterministic template per view. Views share no alphabetic template
/// keywords, so the "correct view" of a text is decidable from its tokens.
std::string render_text(ViewKind view, const MoleculeAttributes& attrs);

/// Coarse per-view bucket node a view text points to via "is a".
std::string ontology_text(ViewKind view, const MoleculeAttributes& attrs);
std::string ontology_id(ViewKind view, const MoleculeAttributes& attrs);

enum class Split { Train, Val, Test };
const char* split_name(Split s);

/// Molecules grouped by structural_hash; groups ordered by a seed-mixed hash
/// and cut at the cumulative ratio boundaries, so identical-hash molecules
/// always share a split and the ratio holds to within one group.
std::unordered_map<std::string, Split> assign_splits(const std::vector<Molecule>& mols,
                                                     std::array<double, 3> ratio, uint64_t seed);

struct SynthCorpus {
  CorpusSpec spec;
  std::vector<Molecule> molecules;
  std::vector<TextEntry> texts;  // view texts (mol-linked) then ontology texts
  std::vector<Triplet> triplets;
  std::unordered_map<std::string, Split> split_of;  // by molecule id

  const TextEntry* view_text_of(const std::string& mol_id, ViewKind v) const;
  std::vector<const Molecule*> molecules_in(Split s) const;
};

/// Connected random graphs (spanning tree plus up to two extra edges), atom
/// types uniform over the alphabet, coordinates from a unit Gaussian. A
/// candidate whose rendered text collides with an already accepted molecule
/// in any enabled view is deterministically resampled, which keeps the
/// molecule -> view-text map injective per view for any (spec, seed).
std::vector<Molecule> gen_molecules(const CorpusSpec& spec);

SynthCorpus synth_corpus(const CorpusSpec& spec);

/// MolText (one per molecule and enabled view, relation = view phrase),
/// MolMol between consecutive molecules sharing the coarse
/// (ring count, atom count) signature, and TextText "is a" links from each
/// view text to its ontology node.
std::vector<Triplet> build_synth_kg(const SynthCorpus& corpus);

/// Vocabulary over every string the corpus can put in front of the model:
/// view and ontology texts, relation phrases, linear notations, shipped
/// prompt presets.
Vocab corpus_vocab(const SynthCorpus& corpus);

/// molecules.jsonl, texts.jsonl, triplets.tsv, splits.tsv, vocab.txt
void save_corpus(const SynthCorpus& corpus, const std::string& dir);
SynthCorpus load_corpus(const std::string& dir);

}  // namespace mvmol
