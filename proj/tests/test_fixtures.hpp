#pragma once

#include "mvmol/corpus.hpp"
#include "mvmol/model.hpp"

namespace mvmol_test {

using namespace mvmol;

/// Small deterministic corpus + model sized for unit tests.
struct TinyWorld {
  CorpusSpec spec;
  SynthCorpus corpus;
  Vocab vocab;
  ModelConfig cfg;

  explicit TinyWorld(int n_molecules = 6, uint64_t seed = 51, int n_queries = 2) {
    spec.n_molecules = n_molecules;
    spec.atoms_min = 3;
    spec.atoms_max = 7;
    spec.seed = seed;
    corpus = synth_corpus(spec);
    vocab = corpus_vocab(corpus);
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.struct_layers = 1;
    cfg.qformer_layers = 2;
    cfg.decoder_layers = 1;
    cfg.n_queries = n_queries;
    cfg.d_proj = 8;
    cfg.max_text_len = 48;
    cfg.max_gen_len = 48;
    cfg.max_atoms = 16;
    cfg.atom_alphabet = spec.atom_alphabet;
    cfg.vocab_size = vocab.size();
  }

  template <class S>
  ModelT<S> make_model(uint64_t seed = 7) const {
    ModelT<S> m;
    m.init(cfg, seed);
    return m;
  }

  TokenSequence enc(const std::string& text) const {
    return encode(text, vocab, /*add_cls=*/true, cfg.max_text_len);
  }

  const Molecule& mol(int i) const { return corpus.molecules[static_cast<size_t>(i)]; }

  std::string view_text(int i, ViewKind v) const {
    return corpus.view_text_of(mol(i).id, v)->text;
  }
};

}  // namespace mvmol_test
