#include <benchmark/benchmark.h>

#include "mvmol/objectives.hpp"
#include "mvmol/pipeline.hpp"

using namespace mvmol;

namespace {

struct BenchWorld {
  SynthCorpus corpus;
  Vocab vocab;
  Model model;
  PairDataset pairs;

  BenchWorld() {
    CorpusSpec spec;
    spec.n_molecules = 32;
    spec.seed = 12;
    corpus = synth_corpus(spec);
    vocab = corpus_vocab(corpus);
    ModelConfig cfg;  // desk-scale defaults
    cfg.atom_alphabet = spec.atom_alphabet;
    cfg.vocab_size = vocab.size();
    model.init(cfg, 1);
    pairs = make_pairs(corpus, vocab, cfg.max_text_len);
  }
};

BenchWorld& world() {
  static BenchWorld w;
  return w;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor a = Tensor::randn({n, n}, rng, 1.0);
  Tensor b = Tensor::randn({n, n}, rng, 1.0);
  for (auto _ : state) {
    Tape tape;
    auto c = matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(c.val().data.data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256)->Complexity();

static void BM_StructEncode(benchmark::State& state) {
  BenchWorld& w = world();
  for (auto _ : state) {
    Tape tape;
    Ctx<float> c(tape);
    auto out = w.model.encoder.forward_struct(c, w.corpus.molecules[0]);
    benchmark::DoNotOptimize(out.query_states.val().data.data());
  }
}
BENCHMARK(BM_StructEncode);

static void BM_FusedForward(benchmark::State& state) {
  BenchWorld& w = world();
  TokenSequence prompt = encode(w.pairs.raw_texts[0], w.vocab, true, w.model.cfg.max_text_len);
  for (auto _ : state) {
    Tape tape;
    Ctx<float> c(tape);
    auto out = w.model.encoder.forward_fused(c, w.corpus.molecules[0], prompt);
    benchmark::DoNotOptimize(out.query_states.val().data.data());
  }
}
BENCHMARK(BM_FusedForward);

static void BM_Stage1Step(benchmark::State& state) {
  BenchWorld& w = world();
  const int batch = static_cast<int>(state.range(0));
  std::vector<const Molecule*> mols;
  std::vector<TokenSequence> texts;
  for (int i = 0; i < batch; ++i) {
    mols.push_back(w.pairs.mols[static_cast<size_t>(i)]);
    texts.push_back(w.pairs.texts[static_cast<size_t>(i)]);
  }
  auto params = w.model.named_params();
  AdamWT<float> opt;
  Rng rng(7);
  for (auto _ : state) {
    w.model.zero_grads();
    Tape tape;
    Ctx<float> c(tape);
    auto parts = stage1_loss(c, w.model, mols, texts, 0.1, rng);
    tape.backward(parts.total);
    opt.step(params, 1e-4);
    benchmark::DoNotOptimize(parts.total.val().data.data());
  }
}
BENCHMARK(BM_Stage1Step)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
