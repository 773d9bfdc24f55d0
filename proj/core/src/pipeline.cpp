#include "mvmol/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace mvmol {

namespace {

AdamWConfig adamw_config(const TrainConfig& cfg) {
  return {.lr = cfg.peak_lr, .weight_decay = cfg.weight_decay};
}

/// Shuffled-stream batcher over [0, n). Reshuffles at epoch end and never
/// yields a batch smaller than min_batch (the leftover joins the next epoch).
class Batcher {
 public:
  Batcher(int n, Rng rng, int min_batch = 1) : rng_(rng), min_batch_(min_batch) {
    order_.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = i;
    rng_.shuffle(order_);
  }

  std::vector<int> next(int batch_size) {
    const int n = static_cast<int>(order_.size());
    batch_size = std::min(batch_size, n);
    if (cursor_ >= order_.size() ||
        static_cast<int>(order_.size() - cursor_) < std::max(batch_size, min_batch_)) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    std::vector<int> out(order_.begin() + static_cast<long>(cursor_),
                         order_.begin() + static_cast<long>(cursor_) + batch_size);
    cursor_ += static_cast<size_t>(batch_size);
    return out;
  }

 private:
  Rng rng_;
  std::vector<int> order_;
  size_t cursor_ = 0;
  int min_batch_;
};

std::string checkpoint_path(const std::string& out_dir, int64_t step) {
  return out_dir + "/ckpt_step" + std::to_string(step) + ".mvml";
}

void maybe_mkdir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create directory " + dir);
}

double safe_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) return 0.5;  // degenerate split, uninformative
  return auroc(scores, labels);
}

}  // namespace

PairDataset make_pairs(const SynthCorpus& corpus, const Vocab& vocab, int max_len,
                       std::optional<Split> split) {
  std::map<std::string, const Molecule*> by_id;
  for (const auto& m : corpus.molecules) by_id[m.id] = &m;
  PairDataset out;
  for (const auto& te : corpus.texts) {
    if (te.mol_id.empty()) continue;  // ontology nodes are not pair texts
    if (split.has_value()) {
      auto it = corpus.split_of.find(te.mol_id);
      if (it == corpus.split_of.end() || it->second != *split) continue;
    }
    out.mols.push_back(by_id.at(te.mol_id));
    out.texts.push_back(encode(te.text, vocab, /*add_cls=*/true, max_len));
    out.text_ids.push_back(te.id);
    out.raw_texts.push_back(te.text);
  }
  return out;
}

TrainResult train_stage1(Model& model, const PairDataset& pairs, const TrainConfig& cfg,
                         const std::string& out_dir) {
  cfg.validate();
  require(pairs.size() >= 1, ErrorKind::Value, "train_stage1: empty pair corpus");
  maybe_mkdir(out_dir);
  std::ofstream csv;
  if (!out_dir.empty()) {
    csv.open(out_dir + "/loss_stage1.csv");
    require(csv.good(), ErrorKind::Io, "cannot write loss_stage1.csv");
    csv << "step,lr,loss,cmc,cmm\n";
    csv.precision(9);
  }
  Rng base(cfg.seed);
  const int min_batch = cfg.use_cmm ? 2 : 1;
  Batcher batcher(pairs.size(), base.split(0xB47C), min_batch);
  AdamWT<float> opt(adamw_config(cfg));
  auto params = model.named_params();

  TrainResult result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.peak_lr, cfg.final_lr);
    std::vector<int> idx = batcher.next(cfg.batch_size);
    std::vector<const Molecule*> mols;
    std::vector<TokenSequence> texts;
    for (int i : idx) {
      mols.push_back(pairs.mols[static_cast<size_t>(i)]);
      texts.push_back(pairs.texts[static_cast<size_t>(i)]);
    }
    model.zero_grads();
    Tape tape;
    Ctx<float> c(tape);
    Rng step_rng = base.split(0x517E9 + static_cast<uint64_t>(step));
    auto parts = stage1_loss(c, model, mols, texts, cfg.tau, step_rng, cfg.use_cmc, cfg.use_cmm);
    tape.backward(parts.total);
    clip_global_norm(params, cfg.clip_norm);
    opt.step(params, lr);

    const double loss = static_cast<double>(parts.total.val().item());
    result.loss_curve.push_back(loss);
    if (step == 0) result.initial_loss = loss;
    result.final_loss = loss;
    if (csv.is_open()) {
      csv << step << "," << lr << "," << loss << ","
          << (parts.cmc.valid() ? double(parts.cmc.val().item()) : 0.0) << ","
          << (parts.cmm.valid() ? double(parts.cmm.val().item()) : 0.0) << "\n";
    }
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(model, checkpoint_path(out_dir, step + 1));
  }
  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir + "/ckpt_final.mvml";
    save_checkpoint(model, result.final_checkpoint);
  }
  return result;
}

TrainResult train_stage2(Model& model, const KnowledgeGraph& kg, const Vocab& vocab,
                         const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  require(kg.size() >= 1, ErrorKind::Value, "train_stage2: empty knowledge graph");
  maybe_mkdir(out_dir);
  std::ofstream csv;
  if (!out_dir.empty()) {
    csv.open(out_dir + "/loss_stage2.csv");
    require(csv.good(), ErrorKind::Io, "cannot write loss_stage2.csv");
    csv << "step,lr,loss,kge_c,kge_m,kgc,category\n";
    csv.precision(9);
  }
  Rng base(cfg.seed);

  const std::array<TripletCategory, 3> cats = {TripletCategory::MolText, TripletCategory::MolMol,
                                               TripletCategory::TextText};
  std::vector<TripletCategory> present;
  std::vector<double> weights;
  std::vector<TripletSampler> samplers;
  const std::array<double, 3> overrides = {cfg.w_moltext, cfg.w_molmol, cfg.w_texttext};
  for (size_t ci = 0; ci < cats.size(); ++ci) {
    const int count = kg.count(cats[ci]);
    if (count == 0) continue;
    const double w = overrides[ci] >= 0.0 ? overrides[ci] : static_cast<double>(count);
    if (w <= 0.0) continue;
    present.push_back(cats[ci]);
    weights.push_back(w);
    samplers.emplace_back(kg, base.split(0xCA7 + ci), cats[ci]);
  }
  require(!present.empty(), ErrorKind::Sampling, "train_stage2: no sampleable category");

  AdamWT<float> opt(adamw_config(cfg));
  auto params = model.named_params();
  Rng cat_rng = base.split(0xCA7E6);

  TrainResult result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.peak_lr, cfg.final_lr);
    const size_t ci = static_cast<size_t>(cat_rng.categorical(weights));
    TripletBatch batch = make_batch(kg, samplers[ci].next(cfg.batch_size));
    model.zero_grads();
    Tape tape;
    Ctx<float> c(tape);
    Rng step_rng = base.split(0x57A6E2 + static_cast<uint64_t>(step));
    auto parts = stage2_loss(c, model, batch, vocab, cfg.tau, step_rng, cfg.use_kge_c,
                             cfg.use_kge_m, cfg.use_kgc);
    tape.backward(parts.total);
    clip_global_norm(params, cfg.clip_norm);
    opt.step(params, lr);

    const double loss = static_cast<double>(parts.total.val().item());
    result.loss_curve.push_back(loss);
    if (step == 0) result.initial_loss = loss;
    result.final_loss = loss;
    if (csv.is_open()) {
      csv << step << "," << lr << "," << loss << ","
          << (parts.kge_c.valid() ? double(parts.kge_c.val().item()) : 0.0) << ","
          << (parts.kge_m.valid() ? double(parts.kge_m.val().item()) : 0.0) << ","
          << (parts.kgc.valid() ? double(parts.kgc.val().item()) : 0.0) << ","
          << category_name(batch.category) << "\n";
    }
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(model, checkpoint_path(out_dir, step + 1));
  }
  if (!out_dir.empty()) {
    result.final_checkpoint = out_dir + "/ckpt_final.mvml";
    save_checkpoint(model, result.final_checkpoint);
  }
  return result;
}

RetrievalIndex embed_molecules(Model& model, const std::vector<const Molecule*>& mols,
                               const Vocab& vocab, const std::string& prompt,
                               const std::string& view_tag) {
  RetrievalIndex index;
  index.kind = RetrievalIndex::Kind::Mol;
  index.view_tag = view_tag.empty() && !prompt.empty() ? prompt : view_tag;
  std::optional<TokenSequence> prompt_seq;
  if (!prompt.empty()) prompt_seq = encode(prompt, vocab, true, model.cfg.max_text_len);
  for (const Molecule* m : mols) {
    Tape tape;
    Ctx<float> c(tape);
    FusionOut<float> enc = prompt_seq.has_value()
                               ? model.encoder.forward_fused(c, *m, *prompt_seq)
                               : model.encoder.forward_struct(c, *m);
    index.blocks.push_back(model.project(c, enc.query_states).val());
    index.ids.push_back(m->id);
    index.mols.push_back(m);
  }
  return index;
}

RetrievalIndex embed_texts(Model& model, const std::vector<std::string>& ids,
                           const std::vector<std::string>& texts, const Vocab& vocab) {
  require(ids.size() == texts.size(), ErrorKind::Value, "embed_texts: id/text mismatch");
  RetrievalIndex index;
  index.kind = RetrievalIndex::Kind::Text;
  for (size_t i = 0; i < texts.size(); ++i) {
    Tape tape;
    Ctx<float> c(tape);
    TokenSequence seq = encode(texts[i], vocab, true, model.cfg.max_text_len);
    FusionOut<float> enc = model.encoder.forward_text(c, seq);
    index.blocks.push_back(project_cls(c, model, enc.text_states).val());
    index.ids.push_back(ids[i]);
    index.raw_texts.push_back(texts[i]);
  }
  return index;
}

double block_score(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), ErrorKind::Shape, "block_score: dimension mismatch");
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) {
      double dot = 0.0;
      for (int k = 0; k < a.cols(); ++k) dot += double(a.at(i, k)) * double(b.at(j, k));
      best = std::max(best, dot);
    }
  return best;
}

std::vector<RankedItem> retrieve(Model& model, const Vocab& vocab, const Tensor& query_block,
                                 const Molecule* query_mol, const std::string* query_text,
                                 const RetrievalIndex& index, int k, double alpha) {
  require(!index.ids.empty(), ErrorKind::Value, "retrieve: empty index");
  require(k >= 1, ErrorKind::Value, "retrieve: k must be >= 1");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Value, "retrieve: alpha must be in [0, 1]");
  std::vector<RankedItem> ranked;
  for (int j = 0; j < static_cast<int>(index.ids.size()); ++j)
    ranked.push_back({index.ids[static_cast<size_t>(j)], j,
                      block_score(query_block, index.blocks[static_cast<size_t>(j)])});
  auto by_score = [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  std::stable_sort(ranked.begin(), ranked.end(), by_score);
  if (alpha >= 1.0) return ranked;

  // ensemble re-ranking of the top candidates by the matching head
  const int m = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int r = 0; r < m; ++r) {
    RankedItem& item = ranked[static_cast<size_t>(r)];
    const Molecule* mol = nullptr;
    const std::string* text = nullptr;
    if (query_mol != nullptr && index.kind == RetrievalIndex::Kind::Text) {
      mol = query_mol;
      text = &index.raw_texts[static_cast<size_t>(item.index)];
    } else if (query_text != nullptr && index.kind == RetrievalIndex::Kind::Mol) {
      mol = index.mols[static_cast<size_t>(item.index)];
      text = query_text;
    } else {
      fail(ErrorKind::Value, "retrieve: re-ranking needs a molecule on one side and text on the other");
    }
    Tape tape;
    Ctx<float> c(tape);
    TokenSequence seq = encode(*text, vocab, true, model.cfg.max_text_len);
    auto fused = model.encoder.forward_fused(c, *mol, seq);
    const Tensor logits = model.match_logits(c, fused.query_states).val();
    // the match-class logit, pre-softmax: unbounded but monotone in match confidence
    item.score = alpha * item.score + (1.0 - alpha) * double(logits.at(0, 1));
  }
  std::stable_sort(ranked.begin(), ranked.begin() + m, by_score);
  return ranked;
}

RetrievalEval eval_pair_retrieval(Model& model, const PairDataset& pairs, const Vocab& vocab,
                                  int k, double alpha, const std::string& mol_prompt) {
  require(pairs.size() >= 1, ErrorKind::Value, "eval_pair_retrieval: empty dataset");
  RetrievalIndex mol_index = embed_molecules(model, pairs.mols, vocab, mol_prompt);
  RetrievalIndex text_index = embed_texts(model, pairs.text_ids, pairs.raw_texts, vocab);
  // pair identity is positional: ids may repeat (one molecule, many views)
  std::vector<int> s2t_ranks, t2s_ranks;
  for (int q = 0; q < pairs.size(); ++q) {
    auto ranked_texts = retrieve(model, vocab, mol_index.blocks[static_cast<size_t>(q)],
                                 pairs.mols[static_cast<size_t>(q)], nullptr, text_index, k, alpha);
    for (int pos = 0; pos < static_cast<int>(ranked_texts.size()); ++pos)
      if (ranked_texts[static_cast<size_t>(pos)].index == q) s2t_ranks.push_back(pos + 1);
    auto ranked_mols = retrieve(model, vocab, text_index.blocks[static_cast<size_t>(q)], nullptr,
                                &pairs.raw_texts[static_cast<size_t>(q)], mol_index, k, alpha);
    for (int pos = 0; pos < static_cast<int>(ranked_mols.size()); ++pos)
      if (ranked_mols[static_cast<size_t>(pos)].index == q) t2s_ranks.push_back(pos + 1);
  }
  RetrievalEval out;
  out.s2t = metrics_from_ranks(s2t_ranks);
  out.t2s = metrics_from_ranks(t2s_ranks);
  return out;
}

namespace {

Var property_head_input_var(Ctx<float>& c, Model& model, const Molecule& mol,
                            const std::optional<TokenSequence>& prompt_seq) {
  FusionOut<float> enc = prompt_seq.has_value()
                             ? model.encoder.forward_fused(c, mol, *prompt_seq)
                             : model.encoder.forward_struct(c, mol);
  return colwise_max(enc.query_states);
}

}  // namespace

FinetuneResult finetune_property(Model& model, const std::vector<const Molecule*>& mols,
                                 const std::vector<int>& labels, const std::string& view_prompt,
                                 const Vocab& vocab, const TrainConfig& cfg) {
  require(mols.size() == labels.size() && !mols.empty(), ErrorKind::Value,
          "finetune_property: molecule/label mismatch");
  std::vector<Molecule> copies;
  for (const Molecule* m : mols) copies.push_back(*m);
  auto split_map = assign_splits(copies, {8, 1, 1}, cfg.seed);
  std::vector<int> train_idx, val_idx, test_idx;
  for (int i = 0; i < static_cast<int>(mols.size()); ++i) {
    switch (split_map.at(mols[static_cast<size_t>(i)]->id)) {
      case Split::Train: train_idx.push_back(i); break;
      case Split::Val: val_idx.push_back(i); break;
      case Split::Test: test_idx.push_back(i); break;
    }
  }
  require(!train_idx.empty(), ErrorKind::Value, "finetune_property: empty training split");
  bool has_pos = false, has_neg = false;
  for (int i : train_idx) (labels[static_cast<size_t>(i)] == 1 ? has_pos : has_neg) = true;
  require(has_pos && has_neg, ErrorKind::Value,
          "finetune_property: training split has a single label class");

  std::optional<TokenSequence> prompt_seq;
  if (!view_prompt.empty())
    prompt_seq = encode(view_prompt, vocab, true, model.cfg.max_text_len);

  auto scores_of = [&](const std::vector<int>& subset) {
    std::vector<double> scores;
    std::vector<int> ys;
    for (int i : subset) {
      Tape tape;
      Ctx<float> c(tape);
      Var input = property_head_input_var(c, model, *mols[static_cast<size_t>(i)], prompt_seq);
      Tensor logits = model.prop_fc2(c, relu(model.prop_fc1(c, input))).val();
      scores.push_back(double(logits.at(0, 1)) - double(logits.at(0, 0)));
      ys.push_back(labels[static_cast<size_t>(i)]);
    }
    return std::make_pair(scores, ys);
  };

  auto params = model.named_params();
  AdamWT<float> opt(adamw_config(cfg));
  Rng base(cfg.seed);
  Batcher batcher(static_cast<int>(train_idx.size()), base.split(0xF17E), 1);
  const int steps_per_epoch =
      std::max(1, static_cast<int>((train_idx.size() + cfg.batch_size - 1) / cfg.batch_size));

  FinetuneResult result;
  double best_val = -1.0;
  std::vector<Tensor> best_snapshot;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (int bstep = 0; bstep < steps_per_epoch; ++bstep) {
      std::vector<int> batch = batcher.next(cfg.batch_size);
      model.zero_grads();
      Tape tape;
      Ctx<float> c(tape);
      std::vector<Var> rows;
      std::vector<int> ys;
      for (int bi : batch) {
        const int i = train_idx[static_cast<size_t>(bi)];
        Var input = property_head_input_var(c, model, *mols[static_cast<size_t>(i)], prompt_seq);
        rows.push_back(model.prop_fc2(c, relu(model.prop_fc1(c, input))));
        ys.push_back(labels[static_cast<size_t>(i)]);
      }
      Var loss = cross_entropy(concat_rows(rows), ys);
      tape.backward(loss);
      clip_global_norm(params, cfg.clip_norm);
      opt.step(params, cfg.peak_lr);
    }
    auto [val_scores, val_labels] = scores_of(val_idx.empty() ? train_idx : val_idx);
    const double val = safe_auroc(val_scores, val_labels);
    if (val > best_val) {
      best_val = val;
      result.best_epoch = epoch;
      since_best = 0;
      best_snapshot.clear();
      for (auto& [name, p] : params) best_snapshot.push_back(*p);
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }
  if (!best_snapshot.empty()) {
    for (size_t i = 0; i < params.size(); ++i) *params[i].second = best_snapshot[i];
  }
  result.val_auroc = best_val;
  auto [test_scores, test_labels] = scores_of(test_idx.empty() ? val_idx : test_idx);
  result.test_auroc = safe_auroc(test_scores, test_labels);
  return result;
}

std::vector<std::pair<PromptVariant, FinetuneResult>> prompt_variant_eval(
    const Model& base_model, const std::vector<const Molecule*>& mols,
    const std::vector<int>& labels, const std::vector<PromptVariant>& variants,
    const Vocab& vocab, const TrainConfig& cfg, const std::string& out_csv) {
  require(!variants.empty(), ErrorKind::Config, "prompt_variant_eval: no variants");
  std::vector<std::pair<PromptVariant, FinetuneResult>> results;
  for (const auto& variant : variants) {
    Model model = base_model;  // same initial weights and seed for every variant
    FinetuneResult r = finetune_property(model, mols, labels, variant.prompt, vocab, cfg);
    results.emplace_back(variant, r);
  }
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    require(out.good(), ErrorKind::Io, "cannot write " + out_csv);
    out << "variant,prompt,val_auroc,test_auroc,best_epoch\n";
    out.precision(9);
    for (const auto& [variant, r] : results)
      out << variant.name << ",\"" << variant.prompt << "\"," << r.val_auroc << ","
          << r.test_auroc << "," << r.best_epoch << "\n";
  }
  return results;
}

namespace {

Var caption_condition_var(Ctx<float>& c, Model& model, const Molecule& mol,
                          const std::string& prompt, const Vocab& vocab) {
  TokenSequence p = encode(prompt, vocab, true, model.cfg.max_text_len);
  auto fused = model.encoder.forward_fused(c, mol, p);
  TokenSequence lin = encode(to_linear_notation(mol), vocab, false, model.cfg.max_text_len);
  require(lin.length() >= 1, ErrorKind::Validation, "caption: empty linear serialization");
  Var emb = add(embed_rows(c.use(model.encoder.token_embed), lin.ids),
                slice_rows(c.use(model.encoder.pos_embed), 0, lin.length()));
  return concat_rows<float>({fused.query_states, emb});
}

std::pair<TokenSequence, std::vector<int>> decoder_target(const std::string& text,
                                                          const Vocab& vocab, int max_gen_len) {
  return kgc_target(text, vocab, max_gen_len);
}

}  // namespace

Tensor caption_condition(Model& model, const Molecule& mol, const std::string& prompt,
                         const Vocab& vocab) {
  Tape tape;
  Ctx<float> c(tape);
  return caption_condition_var(c, model, mol, prompt, vocab).val();
}

std::string caption(Model& model, const Molecule& mol, const std::string& prompt,
                    const Vocab& vocab, int max_len) {
  const Tensor cond = caption_condition(model, mol, prompt, vocab);
  GenerationParams params{.max_len = max_len > 0 ? max_len : model.cfg.max_gen_len};
  TokenSequence out = model.decoder.generate(cond, params);
  return vocab.decode(out, /*strip_special=*/true);
}

void train_caption(Model& model, const std::vector<const Molecule*>& mols,
                   const std::vector<std::string>& targets, const std::string& prompt,
                   const Vocab& vocab, const TrainConfig& cfg) {
  require(mols.size() == targets.size() && !mols.empty(), ErrorKind::Value,
          "train_caption: molecule/target mismatch");
  auto params = model.named_params();
  AdamWT<float> opt(adamw_config(cfg));
  Rng base(cfg.seed);
  Batcher batcher(static_cast<int>(mols.size()), base.split(0xCA9), 1);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.peak_lr, cfg.final_lr);
    std::vector<int> batch = batcher.next(cfg.batch_size);
    model.zero_grads();
    Tape tape;
    Ctx<float> c(tape);
    std::vector<Var> losses;
    for (int i : batch) {
      Var cond = caption_condition_var(c, model, *mols[static_cast<size_t>(i)], prompt, vocab);
      auto [input, labels] =
          decoder_target(targets[static_cast<size_t>(i)], vocab, model.cfg.max_gen_len);
      losses.push_back(cross_entropy(model.decoder.forward_teacher(c, cond, input), labels));
    }
    Var total = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    total = div_const(total, static_cast<float>(losses.size()));
    tape.backward(total);
    clip_global_norm(params, cfg.clip_norm);
    opt.step(params, lr);
  }
}

std::string generate_molecule(Model& model, const std::string& text, const Vocab& vocab,
                              int max_len) {
  Tensor z;
  {
    Tape tape;
    Ctx<float> c(tape);
    TokenSequence seq = encode(text, vocab, true, model.cfg.max_text_len);
    z = model.encoder.forward_text(c, seq).text_states.val();
  }
  GenerationParams params{.max_len = max_len > 0 ? max_len : model.cfg.max_gen_len};
  TokenSequence out = model.decoder.generate(z, params);
  return vocab.decode(out, /*strip_special=*/true);
}

void train_text_to_mol(Model& model, const std::vector<std::string>& texts,
                       const std::vector<const Molecule*>& targets, const Vocab& vocab,
                       const TrainConfig& cfg) {
  require(texts.size() == targets.size() && !texts.empty(), ErrorKind::Value,
          "train_text_to_mol: text/molecule mismatch");
  auto params = model.named_params();
  AdamWT<float> opt(adamw_config(cfg));
  Rng base(cfg.seed);
  Batcher batcher(static_cast<int>(texts.size()), base.split(0x6E4), 1);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.peak_lr, cfg.final_lr);
    std::vector<int> batch = batcher.next(cfg.batch_size);
    model.zero_grads();
    Tape tape;
    Ctx<float> c(tape);
    std::vector<Var> losses;
    for (int i : batch) {
      TokenSequence seq = encode(texts[static_cast<size_t>(i)], vocab, true, model.cfg.max_text_len);
      Var z = model.encoder.forward_text(c, seq).text_states;
      auto [input, labels] = decoder_target(to_linear_notation(*targets[static_cast<size_t>(i)]),
                                            vocab, model.cfg.max_gen_len);
      losses.push_back(cross_entropy(model.decoder.forward_teacher(c, z, input), labels));
    }
    Var total = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    total = div_const(total, static_cast<float>(losses.size()));
    tape.backward(total);
    clip_global_norm(params, cfg.clip_norm);
    opt.step(params, lr);
  }
}

double generation_validity(Model& model, const std::vector<std::string>& texts,
                           const Vocab& vocab) {
  require(!texts.empty(), ErrorKind::Value, "generation_validity: no texts");
  int valid = 0;
  for (const auto& text : texts)
    if (parse_linear_notation(generate_molecule(model, text, vocab), nullptr)) ++valid;
  return static_cast<double>(valid) / static_cast<double>(texts.size());
}

void export_embeddings(const RetrievalIndex& index, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  require(!index.blocks.empty(), ErrorKind::Value, "export_embeddings: empty index");
  const size_t width = index.blocks[0].data.size();
  out << "id,view";
  for (size_t i = 0; i < width; ++i) out << ",v" << i;
  out << "\n";
  out.precision(9);
  for (size_t row = 0; row < index.ids.size(); ++row) {
    require(index.blocks[row].data.size() == width, ErrorKind::Shape,
            "export_embeddings: ragged blocks");
    out << index.ids[row] << "," << index.view_tag;
    for (float v : index.blocks[row].data) out << "," << v;
    out << "\n";
  }
}

RetrievalIndex read_embeddings_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot read " + path);
  RetrievalIndex index;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, "embeddings csv: empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    index.ids.push_back(cell);
    std::getline(ss, cell, ',');
    if (index.view_tag.empty()) index.view_tag = cell;
    std::vector<float> values;
    while (std::getline(ss, cell, ',')) values.push_back(std::stof(cell));
    index.blocks.push_back(Tensor({1, static_cast<int>(values.size())}, values));
  }
  return index;
}

}  // namespace mvmol
