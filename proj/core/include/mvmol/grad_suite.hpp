#pragma once

#include <string>
#include <vector>

#include "mvmol/corpus.hpp"
#include "mvmol/grad_check.hpp"
#include "mvmol/objectives.hpp"
#include "mvmol/pipeline.hpp"

namespace mvmol {

struct GradSuiteEntry {
  std::string loss;
  std::string parameter;
  double max_rel_err;
};

/// Finite-difference gradient checks for the five training losses on B <= 3
/// batches of a tiny synthetic fixture, run entirely in double precision.
/// Each loss is differentiated against a handful of representative parameter
/// tensors via the central-difference oracle.
inline std::vector<GradSuiteEntry> run_loss_grad_suite() {
  CorpusSpec spec;
  spec.n_molecules = 4;
  spec.atoms_min = 3;
  spec.atoms_max = 6;
  spec.seed = 404;
  SynthCorpus corpus = synth_corpus(spec);
  Vocab vocab = corpus_vocab(corpus);

  ModelConfig cfg;
  cfg.d_model = 12;
  cfg.n_heads = 2;
  cfg.struct_layers = 1;
  cfg.qformer_layers = 2;
  cfg.decoder_layers = 1;
  cfg.n_queries = 2;
  cfg.d_proj = 6;
  cfg.max_text_len = 48;
  cfg.max_gen_len = 48;
  cfg.max_atoms = 12;
  cfg.atom_alphabet = spec.atom_alphabet;
  cfg.vocab_size = vocab.size();

  ModelD model;
  model.init(cfg, 31337);

  std::vector<const Molecule*> mols = {&corpus.molecules[0], &corpus.molecules[1]};
  std::vector<TokenSequence> texts;
  for (int i = 0; i < 2; ++i) {
    const TextEntry* te = corpus.view_text_of(corpus.molecules[size_t(i)].id, ViewKind::Chemical);
    texts.push_back(encode(te->text, vocab, true, cfg.max_text_len));
  }
  HardNegatives negs;
  negs.neg_text_for_mol = {1, 0};
  negs.neg_mol_for_text = {1, 0};

  auto moltext = [&](const std::string& relation) {
    TripletBatch batch;
    batch.category = TripletCategory::MolText;
    for (int i = 0; i < 2; ++i) {
      ResolvedTriplet r;
      r.category = TripletCategory::MolText;
      r.head_mol = &corpus.molecules[size_t(i)];
      r.relation = relation;
      r.tail_text = &corpus.view_text_of(corpus.molecules[size_t(i)].id, ViewKind::Chemical)->text;
      batch.items.push_back(r);
    }
    return batch;
  };
  TripletBatch molmol;
  molmol.category = TripletCategory::MolMol;
  for (int i = 0; i < 2; ++i) {
    ResolvedTriplet r;
    r.category = TripletCategory::MolMol;
    r.head_mol = &corpus.molecules[size_t(i)];
    r.relation = "structurally similar to";
    r.tail_mol = &corpus.molecules[size_t(i + 2)];
    molmol.items.push_back(r);
  }
  TripletBatch mt_batch = moltext("chemical view");

  const double tau = 0.1;
  std::vector<GradSuiteEntry> out;
  auto check = [&](const std::string& loss_name, const std::string& param_name,
                   TensorT<double>& param, auto&& loss_fn) {
    TensorT<double> probe = param;
    const double err = grad_check<double>(
        [&](TapeD& tape, VarD x) {
          Ctx<double> c(tape);
          c.substitute(param, x);
          return loss_fn(c);
        },
        probe);
    out.push_back({loss_name, param_name, err});
  };

  auto cmc_loss = [&](Ctx<double>& c) {
    std::vector<VarD> qs, ts;
    for (int i = 0; i < 2; ++i) {
      qs.push_back(model.encoder.forward_struct(c, *mols[size_t(i)]).query_states);
      ts.push_back(model.encoder.forward_text(c, texts[size_t(i)]).text_states);
    }
    return loss_cmc(c, model, qs, ts, tau);
  };
  check("loss_cmc", "encoder.query_embed", model.encoder.query_embed, cmc_loss);
  check("loss_cmc", "proj.w", model.proj.w, cmc_loss);

  auto cmm_loss = [&](Ctx<double>& c) { return loss_cmm(c, model, mols, texts, negs); };
  check("loss_cmm", "match.w", model.match.w, cmm_loss);
  check("loss_cmm", "encoder.qf0.ffn_q.fc2.b", model.encoder.qlayers[0].ffn_q.fc2.b, cmm_loss);

  auto kge_c_moltext = [&](Ctx<double>& c) { return loss_kge_c(c, model, mt_batch, vocab, tau); };
  check("loss_kge_c[MolText]", "proj.w", model.proj.w, kge_c_moltext);
  auto kge_c_molmol = [&](Ctx<double>& c) { return loss_kge_c(c, model, molmol, vocab, tau); };
  check("loss_kge_c[MolMol]", "encoder.query_embed", model.encoder.query_embed, kge_c_molmol);

  auto kge_m_loss = [&](Ctx<double>& c) { return loss_kge_m(c, model, mt_batch, vocab, negs); };
  check("loss_kge_m", "match.w", model.match.w, kge_m_loss);
  check("loss_kge_m", "encoder.final_ln_q.gain", model.encoder.final_ln_q.gain, kge_m_loss);

  auto kgc_loss = [&](Ctx<double>& c) { return loss_kgc(c, model, mt_batch, vocab); };
  check("loss_kgc", "decoder.out_proj.b", model.decoder.out_proj.b, kgc_loss);
  check("loss_kgc", "encoder.query_embed", model.encoder.query_embed, kgc_loss);

  return out;
}

}  // namespace mvmol
