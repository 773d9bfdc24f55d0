#include <doctest.h>

#include <cmath>

#include "mvmol/model.hpp"
#include "mvmol/optim.hpp"
#include "test_fixtures.hpp"

using namespace mvmol;
using mvmol_test::TinyWorld;

namespace {

TokenSequence decoder_input(const std::string& text, const Vocab& vocab, std::vector<int>* labels) {
  TokenSequence body = encode(text, vocab, false, 40);
  TokenSequence input;
  input.ids.push_back(kBos);
  labels->clear();
  for (int id : body.ids) {
    input.ids.push_back(id);
    labels->push_back(id);
  }
  labels->push_back(kEos);
  return input;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("teacher-forced logits have one row per target position") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Rng rng(3);
  Tensor z = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  std::vector<int> labels;
  TokenSequence input = decoder_input(w.view_text(0, ViewKind::Chemical), w.vocab, &labels);
  Tape tape;
  Ctx<float> c(tape);
  Var logits = model.decoder.forward_teacher(c, c.constant(z), input);
  CHECK(logits.val().shape == std::vector<int>{input.length(), w.cfg.vocab_size});
}

TEST_CASE("causality: perturbing token j never changes logits before j") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Rng rng(5);
  Tensor z = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  std::vector<int> labels;
  TokenSequence input = decoder_input(w.view_text(1, ViewKind::Pharmacokinetic), w.vocab, &labels);
  Tensor base;
  {
    Tape tape;
    Ctx<float> c(tape);
    base = model.decoder.forward_teacher(c, c.constant(z), input).val();
  }
  for (int j = 1; j < input.length(); ++j) {
    TokenSequence probe = input;
    probe.ids[static_cast<size_t>(j)] = (probe.ids[static_cast<size_t>(j)] + 1) % w.cfg.vocab_size;
    Tape tape;
    Ctx<float> c(tape);
    Tensor out = model.decoder.forward_teacher(c, c.constant(z), probe).val();
    for (int i = 0; i < j; ++i)
      for (int v = 0; v < w.cfg.vocab_size; ++v)
        CHECK(std::fabs(double(out.at(i, v)) - double(base.at(i, v))) <= 1e-6);
    // and some position at or after j must change, otherwise the probe is vacuous
    double after = 0.0;
    for (int i = j; i < input.length(); ++i)
      for (int v = 0; v < w.cfg.vocab_size; ++v)
        after = std::max(after, std::fabs(double(out.at(i, v)) - double(base.at(i, v))));
    CHECK(after > 0.0);
  }
}

TEST_CASE("zeroed cross-attention output makes logits independent of z") {
  TinyWorld w;
  auto model = w.make_model<float>();
  for (auto& layer : model.decoder.layers) {
    for (auto& v : layer.cross_attn.wo.w.data) v = 0.0f;
    for (auto& v : layer.cross_attn.wo.b.data) v = 0.0f;
  }
  Rng rng(9);
  Tensor z1 = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  Tensor z2 = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  std::vector<int> labels;
  TokenSequence input = decoder_input("is a", w.vocab, &labels);
  Tape tape;
  Ctx<float> c(tape);
  Tensor a = model.decoder.forward_teacher(c, c.constant(z1), input).val();
  Tensor b = model.decoder.forward_teacher(c, c.constant(z2), input).val();
  CHECK(a.data == b.data);
}

TEST_CASE("greedy generation is deterministic and respects max_len") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Rng rng(11);
  Tensor z = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);

  GenerationParams one{.max_len = 1};
  TokenSequence g1 = model.decoder.generate(z, one);
  CHECK(g1.length() == 2);  // [BOS] plus one generated token

  GenerationParams params{.max_len = 12};
  TokenSequence a = model.decoder.generate(z, params);
  TokenSequence b = model.decoder.generate(z, params);
  CHECK(a.ids == b.ids);
  CHECK(a.length() <= 13);
}

TEST_CASE("untrained teacher-forced loss sits near ln |vocab|") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Rng rng(13);
  Tensor z = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < 4; ++i) {
    std::vector<int> labels;
    TokenSequence input = decoder_input(w.view_text(i, ViewKind::Chemical), w.vocab, &labels);
    Tape tape;
    Ctx<float> c(tape);
    Var logits = model.decoder.forward_teacher(c, c.constant(z), input);
    total += double(cross_entropy(logits, labels).val().item());
    ++count;
  }
  const double mean = total / count;
  const double uniform = std::log(double(w.cfg.vocab_size));
  CHECK(mean >= 0.9 * uniform);
  CHECK(mean <= 1.1 * uniform);
}

TEST_CASE("decoder memorizes a single conditioned sequence") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Rng rng(17);
  Tensor z = Tensor::randn({w.cfg.n_queries, w.cfg.d_model}, rng, 1.0);
  std::vector<int> labels;
  TokenSequence input = decoder_input("physical : volume 3 ; spread 6", w.vocab, &labels);

  NamedParamsT<float> dec_params;
  model.decoder.collect("decoder", dec_params);
  AdamWT<float> opt({.lr = 3e-3, .weight_decay = 0.0});
  for (int step = 0; step < 300; ++step) {
    for (auto& [name, p] : dec_params) p->zero_grad();
    Tape tape;
    Ctx<float> c(tape);
    Var loss = cross_entropy(model.decoder.forward_teacher(c, c.constant(z), input), labels);
    tape.backward(loss);
    opt.step(dec_params);
  }
  {
    Tape tape;
    Ctx<float> c(tape);
    Var loss = cross_entropy(model.decoder.forward_teacher(c, c.constant(z), input), labels);
    CHECK(loss.val().item() < 0.05f);
  }
  TokenSequence generated = model.decoder.generate(z, {.max_len = 20});
  std::vector<int> expected = labels;  // body then EOS
  std::vector<int> got(generated.ids.begin() + 1, generated.ids.end());
  CHECK(got == expected);
}

}  // TEST_SUITE
