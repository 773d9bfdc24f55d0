#include "mvmol/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mvmol {

using nlohmann::json;

const char* category_name(TripletCategory c) {
  switch (c) {
    case TripletCategory::MolText: return "MolText";
    case TripletCategory::MolMol: return "MolMol";
    case TripletCategory::TextText: return "TextText";
  }
  return "?";
}

TripletCategory categorize(const Triplet& t) {
  require(!t.relation.empty(), ErrorKind::Validation, "triplet: empty relation");
  if (t.head.kind == EntityKind::Mol && t.tail.kind == EntityKind::Text)
    return TripletCategory::MolText;
  if (t.head.kind == EntityKind::Mol && t.tail.kind == EntityKind::Mol)
    return TripletCategory::MolMol;
  if (t.head.kind == EntityKind::Text && t.tail.kind == EntityKind::Text)
    return TripletCategory::TextText;
  fail(ErrorKind::Category, "triplet: Text head with Mol tail is not a supported orientation");
}

std::vector<TextEntry> load_texts(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot read " + path);
  std::vector<TextEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      TextEntry e;
      e.id = j.at("id").get<std::string>();
      e.text = j.at("text").get<std::string>();
      if (j.contains("mol_id")) e.mol_id = j["mol_id"].get<std::string>();
      if (j.contains("view")) e.view = j["view"].get<std::string>();
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, "texts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_texts(const std::vector<TextEntry>& texts, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  for (const auto& e : texts) {
    json j;
    j["id"] = e.id;
    j["text"] = e.text;
    if (!e.mol_id.empty()) j["mol_id"] = e.mol_id;
    if (!e.view.empty()) j["view"] = e.view;
    out << j.dump() << "\n";
  }
}

namespace {
EntityKind parse_kind(const std::string& s, int line_no) {
  if (s == "mol" || s == "Mol") return EntityKind::Mol;
  if (s == "text" || s == "Text") return EntityKind::Text;
  fail(ErrorKind::Parse,
       "triplets line " + std::to_string(line_no) + ": unknown entity kind '" + s + "'");
}

std::string kind_token(EntityKind k) { return k == EntityKind::Mol ? "mol" : "text"; }

std::string dedup_key(const Triplet& t) {
  return kind_token(t.head.kind) + "\x01" + t.head.id + "\x01" + t.relation + "\x01" +
         kind_token(t.tail.kind) + "\x01" + t.tail.id;
}
}  // namespace

KnowledgeGraph KnowledgeGraph::ingest(const std::string& tsv_path,
                                      const std::vector<Molecule>& mols,
                                      const std::vector<TextEntry>& texts) {
  std::ifstream in(tsv_path);
  require(in.good(), ErrorKind::Io, "cannot read " + tsv_path);
  std::vector<Triplet> triplets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    require(cols.size() == 5, ErrorKind::Parse,
            "triplets line " + std::to_string(line_no) + ": expected 5 tab-separated columns, got " +
                std::to_string(cols.size()));
    Triplet t;
    t.head = {parse_kind(cols[0], line_no), cols[1]};
    t.relation = cols[2];
    t.tail = {parse_kind(cols[3], line_no), cols[4]};
    require(!t.relation.empty(), ErrorKind::Parse,
            "triplets line " + std::to_string(line_no) + ": empty relation");
    categorize(t);  // rejects Text->Mol with a Category error
    triplets.push_back(std::move(t));
  }
  return from_triplets(std::move(triplets), mols, texts);
}

KnowledgeGraph KnowledgeGraph::from_triplets(std::vector<Triplet> triplets,
                                             const std::vector<Molecule>& mols,
                                             const std::vector<TextEntry>& texts) {
  KnowledgeGraph kg;
  kg.mols_ = mols;
  kg.texts_ = texts;
  std::set<std::string> seen;
  for (auto& t : triplets) {
    if (!seen.insert(dedup_key(t)).second) continue;
    kg.triplets_.push_back(std::move(t));
  }
  kg.index();
  return kg;
}

void KnowledgeGraph::index() {
  mol_index_.clear();
  text_index_.clear();
  for (int i = 0; i < static_cast<int>(mols_.size()); ++i) mol_index_[mols_[static_cast<size_t>(i)].id] = i;
  for (int i = 0; i < static_cast<int>(texts_.size()); ++i) text_index_[texts_[static_cast<size_t>(i)].id] = i;

  std::vector<std::string> dangling;
  auto check = [&](const EntityRef& e) {
    const bool ok = e.kind == EntityKind::Mol ? mol_index_.count(e.id) > 0
                                              : text_index_.count(e.id) > 0;
    if (!ok) dangling.push_back(kind_token(e.kind) + ":" + e.id);
  };
  for (auto& c : by_category_) c.clear();
  for (int i = 0; i < static_cast<int>(triplets_.size()); ++i) {
    const Triplet& t = triplets_[static_cast<size_t>(i)];
    check(t.head);
    check(t.tail);
    by_category_[static_cast<int>(categorize(t))].push_back(i);
  }
  if (!dangling.empty()) {
    std::sort(dangling.begin(), dangling.end());
    dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
    std::string msg = "dangling entity ids:";
    for (const auto& d : dangling) msg += " " + d;
    fail(ErrorKind::Resolution, msg);
  }
}

int KnowledgeGraph::count(TripletCategory c) const {
  return static_cast<int>(by_category_[static_cast<int>(c)].size());
}

const std::vector<int>& KnowledgeGraph::indices_of(TripletCategory c) const {
  return by_category_[static_cast<int>(c)];
}

const Molecule& KnowledgeGraph::mol(const std::string& id) const {
  auto it = mol_index_.find(id);
  require(it != mol_index_.end(), ErrorKind::Resolution, "unknown molecule id '" + id + "'");
  return mols_[static_cast<size_t>(it->second)];
}

const std::string& KnowledgeGraph::text(const std::string& id) const {
  auto it = text_index_.find(id);
  require(it != text_index_.end(), ErrorKind::Resolution, "unknown text id '" + id + "'");
  return texts_[static_cast<size_t>(it->second)].text;
}

std::string KnowledgeGraph::stats_table() const {
  std::ostringstream os;
  os << "Entities\n";
  os << "Molecules " << mols_.size() << "\n";
  os << "Texts " << texts_.size() << "\n";
  os << "All " << mols_.size() + texts_.size() << "\n";
  os << "Relations\n";
  for (TripletCategory c :
       {TripletCategory::MolText, TripletCategory::MolMol, TripletCategory::TextText})
    os << category_name(c) << " " << count(c) << "\n";
  os << "All " << triplets_.size() << "\n";
  return os.str();
}

void KnowledgeGraph::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  for (const auto& t : triplets_)
    out << kind_token(t.head.kind) << "\t" << t.head.id << "\t" << t.relation << "\t"
        << kind_token(t.tail.kind) << "\t" << t.tail.id << "\n";
}

ResolvedTriplet resolve(const KnowledgeGraph& kg, const Triplet& t) {
  ResolvedTriplet r;
  r.category = categorize(t);
  r.relation = t.relation;
  if (t.head.kind == EntityKind::Mol)
    r.head_mol = &kg.mol(t.head.id);
  else
    r.head_text = &kg.text(t.head.id);
  if (t.tail.kind == EntityKind::Mol)
    r.tail_mol = &kg.mol(t.tail.id);
  else
    r.tail_text = &kg.text(t.tail.id);
  return r;
}

TripletSampler::TripletSampler(const KnowledgeGraph& kg, Rng rng,
                               std::optional<TripletCategory> filter)
    : kg_(&kg), rng_(rng) {
  if (filter.has_value())
    pool_ = kg.indices_of(*filter);
  else
    for (int i = 0; i < kg.size(); ++i) pool_.push_back(i);
  require(!pool_.empty(), ErrorKind::Sampling,
          filter.has_value()
              ? std::string("sampler: no triplets of category ") + category_name(*filter)
              : std::string("sampler: empty knowledge graph"));
  order_ = pool_;
  rng_.shuffle(order_);
}

std::vector<int> TripletSampler::next(int batch_size) {
  require(batch_size >= 1, ErrorKind::Sampling, "sampler: batch_size must be >= 1");
  if (cursor_ == order_.size()) {
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  // a batch never crosses an epoch boundary: the epoch tail yields a short
  // batch so that every triplet appears exactly once per epoch
  const size_t take = std::min(static_cast<size_t>(batch_size), order_.size() - cursor_);
  std::vector<int> out(order_.begin() + static_cast<long>(cursor_),
                       order_.begin() + static_cast<long>(cursor_ + take));
  cursor_ += take;
  return out;
}

}  // namespace mvmol
