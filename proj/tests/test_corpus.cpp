#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "mvmol/corpus.hpp"
#include "mvmol/text.hpp"

using namespace mvmol;

namespace {

std::set<std::string> alpha_tokens(const std::string& text) {
  std::set<std::string> out;
  for (const auto& tok : tokenize(text)) {
    bool alpha = true;
    for (char c : tok)
      if (!std::isalpha(static_cast<unsigned char>(c))) alpha = false;
    if (alpha && !tok.empty()) out.insert(tok);
  }
  return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("generation is deterministic in (spec, seed)") {
  CorpusSpec spec;
  spec.n_molecules = 10;
  spec.seed = 7;
  auto a = gen_molecules(spec);
  auto b = gen_molecules(spec);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(molecule_to_json(a[i]) == molecule_to_json(b[i]));

  spec.seed = 8;
  auto c = gen_molecules(spec);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (molecule_to_json(a[i]) != molecule_to_json(c[i])) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("every generated molecule is connected and valid") {
  CorpusSpec spec;
  spec.n_molecules = 24;
  spec.atoms_min = 2;
  spec.atoms_max = 6;
  spec.seed = 99;
  for (const auto& m : gen_molecules(spec)) {
    m.validate(/*strict=*/true);
    CHECK(m.bond_count() >= 1);  // spanning tree over >= 2 atoms
  }
}

TEST_CASE("triangle graph has one ring") {
  Molecule tri;
  tri.id = "tri";
  tri.atoms = {0, 1, 2};
  tri.bonds = {{0, 1}, {1, 2}, {2, 0}};
  tri.coords = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  auto attrs = derive_attributes(tri, 8);
  CHECK(attrs.ring_count == 1);  // |E| - |V| + 1
}

TEST_CASE("physical attributes are translation invariant") {
  CorpusSpec spec;
  spec.n_molecules = 4;
  spec.seed = 11;
  auto mols = gen_molecules(spec);
  for (const auto& m : mols) {
    Molecule shifted = m;
    for (auto& c : shifted.coords)
      for (int k = 0; k < 3; ++k) c[static_cast<size_t>(k)] += 42.0;
    auto a = derive_attributes(m, spec.atom_alphabet);
    auto b = derive_attributes(shifted, spec.atom_alphabet);
    CHECK(a.volume_bucket == b.volume_bucket);
    CHECK(a.spread_bucket == b.spread_bucket);
    CHECK(a.extent_buckets == b.extent_buckets);
    CHECK(render_text(ViewKind::Physical, a) == render_text(ViewKind::Physical, b));
  }
}

TEST_CASE("attributes are a function of structure") {
  auto mols = gen_molecules([] {
    CorpusSpec s;
    s.n_molecules = 3;
    s.seed = 5;
    return s;
  }());
  for (const auto& m : mols) {
    Molecule copy = m;
    copy.id = "other-id";
    for (ViewKind v : kAllViews)
      CHECK(render_text(v, derive_attributes(m, 8)) == render_text(v, derive_attributes(copy, 8)));
  }
}

TEST_CASE("render_text is deterministic, views share no alphabetic keywords, texts stay short") {
  CorpusSpec spec;
  spec.n_molecules = 12;
  spec.seed = 3;
  auto mols = gen_molecules(spec);
  for (const auto& m : mols) {
    auto attrs = derive_attributes(m, spec.atom_alphabet);
    auto chem = render_text(ViewKind::Chemical, attrs);
    CHECK(chem == render_text(ViewKind::Chemical, attrs));
    auto phys = render_text(ViewKind::Physical, attrs);
    auto pharma = render_text(ViewKind::Pharmacokinetic, attrs);
    for (const auto& kw : alpha_tokens(chem)) {
      CHECK(alpha_tokens(phys).count(kw) == 0);
      CHECK(alpha_tokens(pharma).count(kw) == 0);
    }
    for (const auto& kw : alpha_tokens(phys)) CHECK(alpha_tokens(pharma).count(kw) == 0);
    for (ViewKind v : kAllViews) CHECK(tokenize(render_text(v, attrs)).size() <= 32);
  }
}

TEST_CASE("synth kg: per-view MolText triplets, categories match construction") {
  CorpusSpec spec;
  spec.n_molecules = 32;
  spec.seed = 1234;
  SynthCorpus corpus = synth_corpus(spec);

  int moltext = 0, molmol = 0, texttext = 0;
  for (const auto& t : corpus.triplets) {
    switch (categorize(t)) {
      case TripletCategory::MolText: ++moltext; break;
      case TripletCategory::MolMol: ++molmol; break;
      case TripletCategory::TextText: ++texttext; break;
    }
  }
  CHECK(moltext == spec.n_molecules * static_cast<int>(spec.views.size()));
  CHECK(molmol > 0);
  CHECK(texttext == spec.n_molecules * static_cast<int>(spec.views.size()));

  // each molecule has one text per enabled view (the MVST property)
  for (const auto& m : corpus.molecules)
    for (ViewKind v : spec.views) CHECK(corpus.view_text_of(m.id, v) != nullptr);
}

TEST_CASE("molecule to view text map is injective per view on the default corpus") {
  CorpusSpec spec;  // defaults: n=64, all views
  SynthCorpus corpus = synth_corpus(spec);
  for (ViewKind v : spec.views) {
    std::set<std::string> seen;
    for (const auto& m : corpus.molecules) {
      const TextEntry* te = corpus.view_text_of(m.id, v);
      REQUIRE(te != nullptr);
      CHECK(seen.insert(te->text).second);
    }
  }
}

TEST_CASE("split assignment follows the hash and the ratio") {
  CorpusSpec spec;
  spec.n_molecules = 50;
  spec.seed = 21;
  auto mols = gen_molecules(spec);
  auto splits = assign_splits(mols, {8, 1, 1}, spec.seed);
  auto splits_again = assign_splits(mols, {8, 1, 1}, spec.seed);
  int train = 0;
  size_t max_group = 1;
  std::map<uint64_t, int> group_sizes;
  for (const auto& m : mols) ++group_sizes[structural_hash(m)];
  for (const auto& [h, s] : group_sizes) max_group = std::max(max_group, static_cast<size_t>(s));
  for (const auto& m : mols) {
    CHECK(splits.at(m.id) == splits_again.at(m.id));
    if (splits.at(m.id) == Split::Train) ++train;
  }
  CHECK(std::abs(train - 40) <= static_cast<int>(max_group));

  // identical-hash molecules always land together
  std::map<uint64_t, std::set<Split>> split_sets;
  for (const auto& m : mols) split_sets[structural_hash(m)].insert(splits.at(m.id));
  for (const auto& [h, ss] : split_sets) CHECK(ss.size() == 1);
}

TEST_CASE("corpus save/load round trip") {
  CorpusSpec spec;
  spec.n_molecules = 16;
  spec.seed = 31;
  SynthCorpus corpus = synth_corpus(spec);
  auto dir = (std::filesystem::temp_directory_path() / "mvmol_corpus_rt").string();
  save_corpus(corpus, dir);
  SynthCorpus loaded = load_corpus(dir);
  CHECK(loaded.molecules.size() == corpus.molecules.size());
  CHECK(loaded.texts.size() == corpus.texts.size());
  CHECK(loaded.triplets.size() == corpus.triplets.size());
  for (const auto& m : corpus.molecules) {
    CHECK(loaded.split_of.at(m.id) == corpus.split_of.at(m.id));
  }
  CHECK(loaded.spec.views.size() == corpus.spec.views.size());

  Vocab v = Vocab::load(dir + "/vocab.txt");
  // every corpus text tokenizes without UNK
  for (const auto& te : corpus.texts)
    for (const auto& tok : tokenize(te.text)) CHECK(v.id_of(tok) != kUnk);
  // so do linear notations
  for (const auto& m : corpus.molecules)
    for (const auto& tok : tokenize(to_linear_notation(m))) CHECK(v.id_of(tok) != kUnk);
}

}  // TEST_SUITE
