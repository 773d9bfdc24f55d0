#include <doctest.h>

#include <filesystem>

#include "mvmol/rng.hpp"
#include "mvmol/text.hpp"

using namespace mvmol;

TEST_SUITE("text") {

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("Blood-brain barrier.") ==
        std::vector<std::string>{"blood", "-", "brain", "barrier", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("  a3  B ") == std::vector<std::string>{"a3", "b"});
}

TEST_CASE("vocab respects min_freq and reserved ids") {
  Vocab v1 = Vocab::build({"a a b"}, 1);
  CHECK(v1.size() == kNumSpecial + 2);
  CHECK(v1.contains("a"));
  CHECK(v1.contains("b"));
  CHECK(v1.id_of("a") == kNumSpecial);  // most frequent gets the first free id

  Vocab v2 = Vocab::build({"a a b"}, 2);
  CHECK(v2.size() == kNumSpecial + 1);
  CHECK(v2.id_of("b") == kUnk);

  CHECK(v1.token_of(kPad) == "[PAD]");
  CHECK(v1.token_of(kCls) == "[CLS]");
  CHECK(v1.token_of(kUnk) == "[UNK]");
}

TEST_CASE("vocab construction is deterministic") {
  std::vector<std::string> corpus = {"zeta alpha beta", "beta alpha", "alpha"};
  Vocab a = Vocab::build(corpus, 1);
  Vocab b = Vocab::build(corpus, 1);
  for (const auto& tok : {"zeta", "alpha", "beta"}) CHECK(a.id_of(tok) == b.id_of(tok));
  // frequency desc then lexicographic: alpha(3) beta(2) zeta(1)
  CHECK(a.id_of("alpha") < a.id_of("beta"));
  CHECK(a.id_of("beta") < a.id_of("zeta"));
}

TEST_CASE("vocab rejects empty corpus") {
  CHECK_THROWS_AS(Vocab::build({}, 1), Error);
}

TEST_CASE("encode adds cls, truncates, maps oov to unk") {
  Vocab v = Vocab::build({"red green blue"}, 1);
  TokenSequence s = encode("red green blue", v, /*add_cls=*/true, 16);
  CHECK(s.length() == 4);
  CHECK(s.starts_with_cls());

  std::string long_text;
  for (int i = 0; i < 300; ++i) long_text += "red ";
  CHECK(encode(long_text, v, true, 256).length() == 256);

  TokenSequence oov = encode("red purple blue", v, false, 16);
  CHECK(oov.ids[1] == kUnk);
  CHECK(oov.ids[0] == v.id_of("red"));
}

TEST_CASE("encode round-trips in-vocab text") {
  Vocab v = Vocab::build({"the cat sat on the mat"}, 1);
  TokenSequence s = encode("the cat sat", v, false, 32);
  std::string decoded = v.decode(s);
  TokenSequence again = encode(decoded, v, false, 32);
  CHECK(s.ids == again.ids);
}

TEST_CASE("concat_texts layout and truncation") {
  Vocab v = Vocab::build({"x y"}, 1);
  TokenSequence a = encode("x", v, true, 8);
  TokenSequence b = encode("y", v, true, 8);
  TokenSequence c = concat_texts(a, b, 16);
  CHECK(c.ids == std::vector<int>{kCls, v.id_of("x"), kSep, v.id_of("y")});

  TokenSequence empty;
  TokenSequence ce = concat_texts(a, empty, 16);
  CHECK(ce.ids == std::vector<int>{kCls, v.id_of("x"), kSep});

  // |a| + |b| + 2 when under max_len (bodies of 1 token each here)
  CHECK(c.length() == 1 + 1 + 1 + 1);
  CHECK(concat_texts(a, b, 3).length() == 3);
}

TEST_CASE("concat order matters and max_len is never exceeded") {
  Vocab v = Vocab::build({"p q r s t u v w"}, 1);
  Rng rng(77);
  std::vector<std::string> words = {"p", "q", "r", "s", "t", "u", "v", "w"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string ta, tb;
    for (int i = 0; i < rng.uniform_int(6) + 1; ++i) ta += words[static_cast<size_t>(rng.uniform_int(8))] + " ";
    for (int i = 0; i < rng.uniform_int(6) + 1; ++i) tb += words[static_cast<size_t>(rng.uniform_int(8))] + " ";
    TokenSequence a = encode(ta, v, true, 32);
    TokenSequence b = encode(tb, v, true, 32);
    const int max_len = 4 + rng.uniform_int(12);
    TokenSequence ab = concat_texts(a, b, max_len);
    CHECK(ab.length() <= max_len);
    CHECK(ab.starts_with_cls());
    if (a.ids != b.ids) {
      TokenSequence ba = concat_texts(b, a, 64);
      TokenSequence ab_full = concat_texts(a, b, 64);
      CHECK(ab_full.ids != ba.ids);
    }
  }
}

TEST_CASE("vocab file round-trip, one token per line") {
  Vocab v = Vocab::build({"alpha beta gamma"}, 1);
  auto path = (std::filesystem::temp_directory_path() / "mvmol_vocab_test.txt").string();
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.token_of(i) == v.token_of(i));
}

}  // TEST_SUITE
