#include "mvmol/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mvmol/presets.hpp"

namespace fs = std::filesystem;

namespace mvmol {

const char* view_name(ViewKind v) {
  switch (v) {
    case ViewKind::Chemical: return "chemical";
    case ViewKind::Physical: return "physical";
    case ViewKind::Pharmacokinetic: return "pharmacokinetic";
  }
  return "?";
}

const char* view_phrase(ViewKind v) {
  switch (v) {
    case ViewKind::Chemical: return "chemical view";
    case ViewKind::Physical: return "physical view";
    case ViewKind::Pharmacokinetic: return "pharmacokinetic view";
  }
  return "?";
}

ViewKind view_from_name(const std::string& name) {
  for (ViewKind v : kAllViews)
    if (name == view_name(v)) return v;
  fail(ErrorKind::Config, "unknown view '" + name + "'");
}

void CorpusSpec::validate() const {
  require(n_molecules >= 1, ErrorKind::Config, "corpus spec: n_molecules must be >= 1");
  require(atoms_min >= 2, ErrorKind::Config, "corpus spec: atoms_min must be >= 2");
  require(atoms_max >= atoms_min, ErrorKind::Config, "corpus spec: atoms_max < atoms_min");
  require(atom_alphabet >= 4, ErrorKind::Config, "corpus spec: atom alphabet too small");
  require(!views.empty(), ErrorKind::Config, "corpus spec: at least one view required");
  for (double r : split_ratio)
    require(r > 0.0, ErrorKind::Config, "corpus spec: split ratios must be positive");
}

MoleculeAttributes derive_attributes(const Molecule& m, int atom_alphabet) {
  MoleculeAttributes a;
  a.composition.assign(static_cast<size_t>(atom_alphabet), 0);
  for (int t : m.atoms) {
    require(t < atom_alphabet, ErrorKind::Validation,
            "molecule '" + m.id + "': atom type outside the alphabet");
    ++a.composition[static_cast<size_t>(t)];
  }
  a.ring_count = m.ring_count();
  a.has_type3 = atom_alphabet > 3 && a.composition[3] > 0;
  a.type3_count = atom_alphabet > 3 ? a.composition[3] : 0;
  a.atom_count = m.atom_count();
  a.bond_count = m.bond_count();
  a.atoms_odd = m.atom_count() % 2 == 1;
  a.uptake_high = m.atom_count() >= 8;
  auto degrees = m.degree_sequence_sorted();
  a.max_degree = degrees.empty() ? 0 : degrees.back();

  // geometric attributes on centered coordinates
  const int n = m.atom_count();
  std::array<double, 3> mean = {0, 0, 0};
  for (const auto& c : m.coords)
    for (int k = 0; k < 3; ++k) mean[static_cast<size_t>(k)] += c[static_cast<size_t>(k)];
  for (double& v : mean) v /= n;
  std::array<double, 3> lo = {0, 0, 0}, hi = {0, 0, 0};
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      const double v = m.coords[static_cast<size_t>(i)][static_cast<size_t>(k)] -
                       mean[static_cast<size_t>(k)];
      if (i == 0 || v < lo[static_cast<size_t>(k)]) lo[static_cast<size_t>(k)] = v;
      if (i == 0 || v > hi[static_cast<size_t>(k)]) hi[static_cast<size_t>(k)] = v;
    }
  std::array<double, 3> ext;
  for (int k = 0; k < 3; ++k)
    ext[static_cast<size_t>(k)] = hi[static_cast<size_t>(k)] - lo[static_cast<size_t>(k)];
  std::sort(ext.begin(), ext.end());
  for (int k = 0; k < 3; ++k)
    a.extent_buckets[static_cast<size_t>(k)] =
        static_cast<int>(std::floor(ext[static_cast<size_t>(k)] / 0.75));
  const double volume = ext[0] * ext[1] * ext[2];
  a.volume_bucket = static_cast<int>(std::floor(std::cbrt(std::max(volume, 0.0)) * 2.0));

  double mpd = 0.0;
  int pairs = 0;
  const DistanceMatrix dm = distances(m);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      mpd += dm.at(i, j);
      ++pairs;
    }
  if (pairs > 0) mpd /= pairs;
  a.spread_bucket = static_cast<int>(std::floor(mpd / 0.25));
  return a;
}

std::string render_text(ViewKind view, const MoleculeAttributes& a) {
  std::ostringstream os;
  switch (view) {
    case ViewKind::Chemical:
      os << "chemical : rings " << a.ring_count << " ; type3 "
         << (a.has_type3 ? "present" : "absent") << " ; composition";
      for (int c : a.composition) os << " " << c;
      return os.str();
    case ViewKind::Physical:
      os << "physical : volume " << a.volume_bucket << " ; spread " << a.spread_bucket
         << " ; extent " << a.extent_buckets[0] << " " << a.extent_buckets[1] << " "
         << a.extent_buckets[2];
      return os.str();
    case ViewKind::Pharmacokinetic:
      os << "pharma : halflife " << (a.atoms_odd ? "odd" : "even") << " ; uptake "
         << (a.uptake_high ? "high" : "low") << " ; target3 "
         << (a.type3_count > 0 ? "bound" : "free") << " ; dose " << a.atom_count
         << " ; clearance " << a.bond_count << " ; affinity " << a.type3_count
         << " ; metabolism " << a.max_degree;
      return os.str();
  }
  fail(ErrorKind::Config, "render_text: unknown view");
}

std::string ontology_text(ViewKind view, const MoleculeAttributes& a) {
  std::ostringstream os;
  switch (view) {
    case ViewKind::Chemical:
      os << "ontology chemical ring family " << a.ring_count;
      return os.str();
    case ViewKind::Physical:
      os << "ontology physical volume family " << a.volume_bucket;
      return os.str();
    case ViewKind::Pharmacokinetic:
      os << "ontology pharma uptake family " << (a.uptake_high ? "high" : "low");
      return os.str();
  }
  fail(ErrorKind::Config, "ontology_text: unknown view");
}

std::string ontology_id(ViewKind view, const MoleculeAttributes& a) {
  std::ostringstream os;
  switch (view) {
    case ViewKind::Chemical: os << "onto:chemical:r" << a.ring_count; return os.str();
    case ViewKind::Physical: os << "onto:physical:v" << a.volume_bucket; return os.str();
    case ViewKind::Pharmacokinetic:
      os << "onto:pharma:u" << (a.uptake_high ? 1 : 0);
      return os.str();
  }
  fail(ErrorKind::Config, "ontology_id: unknown view");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::unordered_map<std::string, Split> assign_splits(const std::vector<Molecule>& mols,
                                                     std::array<double, 3> ratio, uint64_t seed) {
  for (double r : ratio)
    require(r > 0.0, ErrorKind::Config, "assign_splits: ratios must be positive");
  struct Group {
    uint64_t order_key;
    std::vector<const Molecule*> members;
  };
  std::map<uint64_t, Group> by_hash;
  for (const auto& m : mols) {
    const uint64_t h = structural_hash(m);
    auto& g = by_hash[h];
    g.order_key = detail::mix64(h ^ detail::mix64(seed));
    g.members.push_back(&m);
  }
  std::vector<const Group*> groups;
  for (const auto& [h, g] : by_hash) groups.push_back(&g);
  std::sort(groups.begin(), groups.end(),
            [](const Group* a, const Group* b) { return a->order_key < b->order_key; });

  const double total_ratio = ratio[0] + ratio[1] + ratio[2];
  const double n = static_cast<double>(mols.size());
  const double t1 = n * ratio[0] / total_ratio;
  const double t2 = n * (ratio[0] + ratio[1]) / total_ratio;
  std::unordered_map<std::string, Split> out;
  double cum = 0.0;
  for (const Group* g : groups) {
    const Split s = cum < t1 ? Split::Train : (cum < t2 ? Split::Val : Split::Test);
    for (const Molecule* m : g->members) out[m->id] = s;
    cum += static_cast<double>(g->members.size());
  }
  return out;
}

const TextEntry* SynthCorpus::view_text_of(const std::string& mol_id, ViewKind v) const {
  for (const auto& t : texts)
    if (t.mol_id == mol_id && t.view == view_name(v)) return &t;
  return nullptr;
}

std::vector<const Molecule*> SynthCorpus::molecules_in(Split s) const {
  std::vector<const Molecule*> out;
  for (const auto& m : molecules) {
    auto it = split_of.find(m.id);
    if (it != split_of.end() && it->second == s) out.push_back(&m);
  }
  return out;
}

namespace {

Molecule gen_candidate(const CorpusSpec& spec, Rng rng, int index) {
  Molecule m;
  m.id = "m" + std::to_string(index);
  const int n = spec.atoms_min + rng.uniform_int(spec.atoms_max - spec.atoms_min + 1);
  for (int i = 0; i < n; ++i) m.atoms.push_back(rng.uniform_int(spec.atom_alphabet));
  // random spanning tree keeps the graph connected
  for (int v = 1; v < n; ++v) m.bonds.push_back({rng.uniform_int(v), v});
  const int extra = rng.uniform_int(3);
  for (int e = 0; e < extra; ++e) {
    for (int attempt = 0; attempt < 10; ++attempt) {
      int a = rng.uniform_int(n), b = rng.uniform_int(n);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      bool dup = false;
      for (const auto& bond : m.bonds) {
        const int lo = std::min(bond[0], bond[1]), hi = std::max(bond[0], bond[1]);
        if (lo == a && hi == b) dup = true;
      }
      if (dup) continue;
      m.bonds.push_back({a, b});
      break;
    }
  }
  for (int i = 0; i < n; ++i)
    m.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
  return m;
}

}  // namespace

std::vector<Molecule> gen_molecules(const CorpusSpec& spec) {
  spec.validate();
  const Rng base(spec.seed);
  std::vector<Molecule> out;
  // per-view text sets drive the injectivity-preserving rejection
  std::map<std::string, std::set<std::string>> used;
  for (int i = 0; i < spec.n_molecules; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      Molecule cand = gen_candidate(spec, base.split(static_cast<uint64_t>(i)).split(
                                              static_cast<uint64_t>(attempt)),
                                    i);
      cand.validate(/*strict=*/true);
      const MoleculeAttributes attrs = derive_attributes(cand, spec.atom_alphabet);
      bool collision = false;
      for (ViewKind v : spec.views)
        if (used[view_name(v)].count(render_text(v, attrs)) > 0) collision = true;
      if (collision) continue;
      for (ViewKind v : spec.views) used[view_name(v)].insert(render_text(v, attrs));
      out.push_back(std::move(cand));
      accepted = true;
    }
    require(accepted, ErrorKind::Sampling,
            "gen_molecules: could not find a distinct molecule for index " + std::to_string(i) +
                "; corpus too large for the attribute space");
  }
  return out;
}

std::vector<Triplet> build_synth_kg(const SynthCorpus& corpus) {
  std::vector<Triplet> out;
  // molecule-text: one triplet per molecule and enabled view
  for (const auto& m : corpus.molecules) {
    for (ViewKind v : corpus.spec.views) {
      const TextEntry* te = corpus.view_text_of(m.id, v);
      require(te != nullptr, ErrorKind::Validation, "missing view text for " + m.id);
      out.push_back({{EntityKind::Mol, m.id}, view_phrase(v), {EntityKind::Text, te->id}});
    }
  }
  // molecule-molecule: consecutive members of each coarse signature group
  std::map<std::pair<int, int>, std::vector<const Molecule*>> sig_groups;
  for (const auto& m : corpus.molecules)
    sig_groups[{m.ring_count(), m.atom_count()}].push_back(&m);
  for (const auto& [sig, members] : sig_groups)
    for (size_t i = 0; i + 1 < members.size(); ++i)
      out.push_back({{EntityKind::Mol, members[i]->id},
                     "structurally similar to",
                     {EntityKind::Mol, members[i + 1]->id}});
  // text-text: each view text "is a" member of its coarse ontology bucket
  for (const auto& m : corpus.molecules) {
    const MoleculeAttributes attrs = derive_attributes(m, corpus.spec.atom_alphabet);
    for (ViewKind v : corpus.spec.views) {
      const TextEntry* te = corpus.view_text_of(m.id, v);
      out.push_back(
          {{EntityKind::Text, te->id}, "is a", {EntityKind::Text, ontology_id(v, attrs)}});
    }
  }
  return out;
}

SynthCorpus synth_corpus(const CorpusSpec& spec) {
  SynthCorpus corpus;
  corpus.spec = spec;
  corpus.molecules = gen_molecules(spec);
  std::set<std::string> onto_seen;
  std::vector<TextEntry> ontology_entries;
  for (const auto& m : corpus.molecules) {
    const MoleculeAttributes attrs = derive_attributes(m, spec.atom_alphabet);
    for (ViewKind v : spec.views) {
      TextEntry e;
      e.id = m.id + ":" + view_name(v);
      e.text = render_text(v, attrs);
      e.mol_id = m.id;
      e.view = view_name(v);
      corpus.texts.push_back(std::move(e));
      const std::string oid = ontology_id(v, attrs);
      if (onto_seen.insert(oid).second)
        ontology_entries.push_back({oid, ontology_text(v, attrs), "", ""});
    }
  }
  corpus.texts.insert(corpus.texts.end(), ontology_entries.begin(), ontology_entries.end());
  corpus.triplets = build_synth_kg(corpus);
  corpus.split_of = assign_splits(corpus.molecules, spec.split_ratio, spec.seed);
  return corpus;
}

Vocab corpus_vocab(const SynthCorpus& corpus) {
  std::vector<std::string> strings;
  for (const auto& t : corpus.texts) strings.push_back(t.text);
  for (ViewKind v : kAllViews) strings.push_back(view_phrase(v));
  strings.push_back("structurally similar to");
  strings.push_back("is a");
  for (const auto& m : corpus.molecules) strings.push_back(to_linear_notation(m));
  for (const auto& [name, prompt] : view_prompt_presets()) strings.push_back(prompt);
  return Vocab::build(strings, /*min_freq=*/1);
}

void save_corpus(const SynthCorpus& corpus, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create directory " + dir);
  write_molecules(corpus.molecules, dir + "/molecules.jsonl");
  write_texts(corpus.texts, dir + "/texts.jsonl");
  KnowledgeGraph kg = KnowledgeGraph::from_triplets(corpus.triplets, corpus.molecules, corpus.texts);
  kg.write_tsv(dir + "/triplets.tsv");
  std::ofstream splits(dir + "/splits.tsv");
  require(splits.good(), ErrorKind::Io, "cannot write splits.tsv");
  for (const auto& m : corpus.molecules)
    splits << m.id << "\t" << split_name(corpus.split_of.at(m.id)) << "\n";
  corpus_vocab(corpus).save(dir + "/vocab.txt");
}

SynthCorpus load_corpus(const std::string& dir) {
  SynthCorpus corpus;
  corpus.molecules = parse_molecules(dir + "/molecules.jsonl", /*strict=*/false);
  corpus.texts = load_texts(dir + "/texts.jsonl");
  KnowledgeGraph kg =
      KnowledgeGraph::ingest(dir + "/triplets.tsv", corpus.molecules, corpus.texts);
  corpus.triplets = kg.triplets();
  std::ifstream splits(dir + "/splits.tsv");
  require(splits.good(), ErrorKind::Io, "cannot read " + dir + "/splits.tsv");
  std::string line;
  int line_no = 0;
  while (std::getline(splits, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    require(tab != std::string::npos, ErrorKind::Parse,
            "splits line " + std::to_string(line_no) + ": expected two columns");
    const std::string id = line.substr(0, tab);
    const std::string name = line.substr(tab + 1);
    Split s;
    if (name == "train")
      s = Split::Train;
    else if (name == "val")
      s = Split::Val;
    else if (name == "test")
      s = Split::Test;
    else
      fail(ErrorKind::Parse, "splits line " + std::to_string(line_no) + ": unknown split");
    corpus.split_of[id] = s;
  }
  corpus.spec.n_molecules = static_cast<int>(corpus.molecules.size());
  std::set<std::string> views_present;
  for (const auto& t : corpus.texts)
    if (!t.view.empty()) views_present.insert(t.view);
  corpus.spec.views.clear();
  for (ViewKind v : kAllViews)
    if (views_present.count(view_name(v))) corpus.spec.views.push_back(v);
  int max_type = 0;
  for (const auto& m : corpus.molecules)
    for (int a : m.atoms) max_type = std::max(max_type, a);
  corpus.spec.atom_alphabet = std::max(corpus.spec.atom_alphabet, max_type + 1);
  return corpus;
}

}  // namespace mvmol
