#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mvmol/error.hpp"

namespace mvmol {

/// Reserved vocabulary ids. These are fixed and never reassigned.
enum SpecialToken : int {
  kPad = 0,
  kCls = 1,
  kSep = 2,
  kBos = 3,
  kEos = 4,
  kUnk = 5,
  kNumSpecial = 6,
};

/// Lowercase, split on whitespace, split punctuation characters into
/// single-character tokens. "Blood-brain barrier." -> blood - brain barrier .
std::vector<std::string> tokenize(const std::string& text);

/// Token ids with the usual special-token conventions. Encoder inputs start
/// with [CLS]; decoder targets start with [BOS].
struct TokenSequence {
  std::vector<int> ids;

  int length() const { return static_cast<int>(ids.size()); }
  bool starts_with_cls() const { return !ids.empty() && ids[0] == kCls; }
};

/// Immutable token <-> id bijection. Construction is deterministic: tokens
/// above min_freq sorted by (frequency desc, lexicographic) after the six
/// reserved ids.
class Vocab {
 public:
  Vocab() = default;

  static Vocab build(const std::vector<std::string>& corpus, int min_freq);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  /// One token per line, line number = id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  std::string decode(const TokenSequence& seq, bool strip_special = true) const;

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;

  void push(const std::string& token);
};

/// Tokenize then map to ids, optionally prefixing [CLS], truncating to
/// max_len (the "text window" ingestion rule).
TokenSequence encode(const std::string& text, const Vocab& vocab, bool add_cls, int max_len);

/// [CLS] a-body [SEP] b-body, truncated to max_len. A leading [CLS] on either
/// input is stripped before concatenation; this is the text-side realization
/// of sequence concatenation for relation-transformed heads.
TokenSequence concat_texts(const TokenSequence& a, const TokenSequence& b, int max_len);

}  // namespace mvmol
