#include "mvmol/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace mvmol {

namespace {
const char* kSpecialNames[kNumSpecial] = {"[PAD]", "[CLS]", "[SEP]", "[BOS]", "[EOS]", "[UNK]"};

bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

void Vocab::push(const std::string& token) {
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int min_freq) {
  require(!corpus.empty(), ErrorKind::Value, "build_vocab: empty corpus");
  std::map<std::string, int64_t> freq;  // ordered map keeps ties lexicographic
  for (const auto& text : corpus)
    for (const auto& tok : tokenize(text)) ++freq[tok];
  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const char* name : kSpecialNames) v.push(name);
  for (const auto& [tok, count] : items) {
    if (count < min_freq) continue;
    if (v.token_to_id_.count(tok)) continue;  // a literal special token in the corpus
    v.push(tok);
  }
  return v;
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  require(id >= 0 && id < size(), ErrorKind::Value, "vocab: id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "vocab: cannot write " + path);
  for (const auto& tok : id_to_token_) out << tok << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "vocab: cannot read " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) v.push(line);
  require(v.size() >= kNumSpecial, ErrorKind::Parse, "vocab: missing reserved tokens in " + path);
  for (int i = 0; i < kNumSpecial; ++i)
    require(v.id_to_token_[static_cast<size_t>(i)] == kSpecialNames[i], ErrorKind::Parse,
            "vocab: reserved id " + std::to_string(i) + " reassigned in " + path);
  return v;
}

std::string Vocab::decode(const TokenSequence& seq, bool strip_special) const {
  std::string out;
  for (int id : seq.ids) {
    if (strip_special && id < kNumSpecial && id != kUnk) continue;
    if (!out.empty()) out += ' ';
    out += token_of(id);
  }
  return out;
}

TokenSequence encode(const std::string& text, const Vocab& vocab, bool add_cls, int max_len) {
  require(max_len >= 2, ErrorKind::Value, "encode: max_len must be >= 2");
  TokenSequence seq;
  if (add_cls) seq.ids.push_back(kCls);
  for (const auto& tok : tokenize(text)) {
    if (seq.length() >= max_len) break;
    seq.ids.push_back(vocab.id_of(tok));
  }
  if (seq.length() > max_len) seq.ids.resize(static_cast<size_t>(max_len));
  return seq;
}

TokenSequence concat_texts(const TokenSequence& a, const TokenSequence& b, int max_len) {
  require(max_len >= 2, ErrorKind::Value, "concat_texts: max_len must be >= 2");
  TokenSequence out;
  out.ids.push_back(kCls);
  auto body = [](const TokenSequence& s) {
    size_t start = s.starts_with_cls() ? 1 : 0;
    return std::vector<int>(s.ids.begin() + static_cast<long>(start), s.ids.end());
  };
  for (int id : body(a)) out.ids.push_back(id);
  out.ids.push_back(kSep);
  for (int id : body(b)) out.ids.push_back(id);
  if (out.length() > max_len) out.ids.resize(static_cast<size_t>(max_len));
  return out;
}

}  // namespace mvmol
