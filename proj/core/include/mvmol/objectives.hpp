#pragma once

#include <vector>

#include "mvmol/kg.hpp"
#include "mvmol/model.hpp"
#include "mvmol/text.hpp"

namespace mvmol {

// ---------------------------------------------------------------------------
// Similarity conventions. All similarities live in [-1, 1]: every compared
// row goes through the projection head (fully-connected + l2 normalization)
// before the dot product.
// ---------------------------------------------------------------------------

/// Projected [CLS] row of a text-state block: 1 x d_proj, unit norm.
template <class S>
VarT<S> project_cls(Ctx<S>& c, ModelT<S>& model, VarT<S> text_states) {
  return model.project(c, slice_rows(text_states, 0, 1));
}

/// Structure-text similarity: max over the K projected query rows of the dot
/// with the projected [CLS] row. Returns a 1x1 var.
template <class S>
VarT<S> sim(Ctx<S>& c, ModelT<S>& model, VarT<S> query_states, VarT<S> text_states) {
  VarT<S> pq = model.project(c, query_states);                  // K x dp
  VarT<S> pt = project_cls(c, model, text_states);              // 1 x dp
  return colwise_max(matmul(pq, transpose(pt)));                // 1 x 1
}

/// B x B structure-text similarity matrix: entry (i, j) compares molecule i's
/// query block against text j's [CLS] row under the sim convention.
template <class S>
VarT<S> sim_matrix(Ctx<S>& c, ModelT<S>& model, const std::vector<VarT<S>>& query_blocks,
                   const std::vector<VarT<S>>& text_blocks) {
  require(query_blocks.size() == text_blocks.size() && !query_blocks.empty(), ErrorKind::Shape,
          "sim_matrix: need equally many molecule and text encodings");
  std::vector<VarT<S>> cls_rows;
  for (const auto& tb : text_blocks) cls_rows.push_back(project_cls(c, model, tb));
  VarT<S> tails = concat_rows(cls_rows);  // B x dp
  std::vector<VarT<S>> rows;
  for (const auto& qb : query_blocks) {
    VarT<S> pq = model.project(c, qb);                       // K x dp
    rows.push_back(colwise_max(matmul(pq, transpose(tails))));  // 1 x B
  }
  return concat_rows(rows);  // B x B
}

/// Symmetric InfoNCE over a precomputed similarity matrix with matching
/// pairs on the diagonal: the average of row-wise and column-wise
/// cross-entropy at temperature tau. Exactly zero for B = 1.
template <class S>
VarT<S> info_nce(VarT<S> sims, double tau) {
  const int b = sims.val().rows();
  require(sims.val().cols() == b && b >= 1, ErrorKind::Shape, "info_nce: square matrix expected");
  require(tau > 0.0, ErrorKind::Value, "info_nce: tau must be positive");
  std::vector<int> diag(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) diag[static_cast<size_t>(i)] = i;
  VarT<S> row_term = cross_entropy(div_const(sims, static_cast<S>(tau)), diag);
  VarT<S> col_term = cross_entropy(div_const(transpose(sims), static_cast<S>(tau)), diag);
  return scale(add(row_term, col_term), S(0.5));
}

/// Cross-modal contrastive loss over encoded (molecule, text) pairs.
template <class S>
VarT<S> loss_cmc(Ctx<S>& c, ModelT<S>& model, const std::vector<VarT<S>>& query_blocks,
                 const std::vector<VarT<S>>& text_blocks, double tau) {
  return info_nce(sim_matrix(c, model, query_blocks, text_blocks), tau);
}

// ---------------------------------------------------------------------------
// Hard negative mining
// ---------------------------------------------------------------------------

struct HardNegatives {
  std::vector<int> neg_text_for_mol;  // per row: sampled off-diagonal column
  std::vector<int> neg_mol_for_text;  // per column: sampled off-diagonal row
};

/// One misaligned partner per sample, drawn with probability proportional to
/// the softmax of the similarity scores (diagonal excluded). The sampling
/// temperature reuses the contrastive tau.
template <class S>
HardNegatives mine_hard_negatives(const TensorT<S>& sims, double tau, Rng& rng) {
  const int b = sims.rows();
  require(sims.cols() == b, ErrorKind::Shape, "mine_hard_negatives: square matrix expected");
  require(b >= 2, ErrorKind::Value, "mine_hard_negatives: batch of at least 2 required");
  HardNegatives out;
  auto sample_excluding = [&](int fixed, bool rows) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < b; ++k) {
      if (k == fixed) continue;
      const double v = static_cast<double>(rows ? sims.at(fixed, k) : sims.at(k, fixed));
      mx = std::max(mx, v);
    }
    std::vector<double> weights(static_cast<size_t>(b), 0.0);
    for (int k = 0; k < b; ++k) {
      if (k == fixed) continue;
      const double v = static_cast<double>(rows ? sims.at(fixed, k) : sims.at(k, fixed));
      weights[static_cast<size_t>(k)] = std::exp((v - mx) / tau);
    }
    return rng.categorical(weights);
  };
  for (int i = 0; i < b; ++i) out.neg_text_for_mol.push_back(sample_excluding(i, true));
  for (int j = 0; j < b; ++j) out.neg_mol_for_text.push_back(sample_excluding(j, false));
  return out;
}

// ---------------------------------------------------------------------------
// Stage 1: modality alignment
// ---------------------------------------------------------------------------

/// Cross-modal matching loss. Three fused passes per pair — the aligned pair
/// and the two mined negatives — pooled by the matching head; rows are
/// ordered (pos_i, text_neg_i, mol_neg_i) per sample, labels (1, 0, 0).
template <class S>
VarT<S> loss_cmm(Ctx<S>& c, ModelT<S>& model, const std::vector<const Molecule*>& mols,
                 const std::vector<TokenSequence>& texts, const HardNegatives& negatives) {
  const int b = static_cast<int>(mols.size());
  require(static_cast<int>(texts.size()) == b && b >= 1, ErrorKind::Shape,
          "loss_cmm: molecule/text count mismatch");
  require(static_cast<int>(negatives.neg_text_for_mol.size()) == b &&
              static_cast<int>(negatives.neg_mol_for_text.size()) == b,
          ErrorKind::Shape, "loss_cmm: negatives do not match the batch");
  std::vector<VarT<S>> rows;
  std::vector<int> labels;
  for (int i = 0; i < b; ++i) {
    const int tn = negatives.neg_text_for_mol[static_cast<size_t>(i)];
    const int mn = negatives.neg_mol_for_text[static_cast<size_t>(i)];
    require(tn != i && mn != i, ErrorKind::Value, "loss_cmm: negative equals the positive pair");
    auto fused_pos = model.encoder.forward_fused(c, *mols[static_cast<size_t>(i)],
                                                 texts[static_cast<size_t>(i)]);
    rows.push_back(model.match_logits(c, fused_pos.query_states));
    labels.push_back(1);
    auto fused_tneg = model.encoder.forward_fused(c, *mols[static_cast<size_t>(i)],
                                                  texts[static_cast<size_t>(tn)]);
    rows.push_back(model.match_logits(c, fused_tneg.query_states));
    labels.push_back(0);
    auto fused_mneg = model.encoder.forward_fused(c, *mols[static_cast<size_t>(mn)],
                                                  texts[static_cast<size_t>(i)]);
    rows.push_back(model.match_logits(c, fused_mneg.query_states));
    labels.push_back(0);
  }
  return cross_entropy(concat_rows(rows), labels);
}

template <class S>
struct Stage1Parts {
  VarT<S> total;
  VarT<S> cmc;  // invalid when disabled
  VarT<S> cmm;
};

/// Stage-1 objective: contrastive plus matching over a pair batch.
template <class S>
Stage1Parts<S> stage1_loss(Ctx<S>& c, ModelT<S>& model, const std::vector<const Molecule*>& mols,
                           const std::vector<TokenSequence>& texts, double tau, Rng& rng,
                           bool use_cmc = true, bool use_cmm = true) {
  const int b = static_cast<int>(mols.size());
  require(b >= 1 && texts.size() == mols.size(), ErrorKind::Shape, "stage1_loss: bad batch");
  require(use_cmc || use_cmm, ErrorKind::Config, "stage1_loss: all objectives disabled");
  std::vector<VarT<S>> query_blocks, text_blocks;
  for (int i = 0; i < b; ++i) {
    query_blocks.push_back(model.encoder.forward_struct(c, *mols[static_cast<size_t>(i)]).query_states);
    text_blocks.push_back(model.encoder.forward_text(c, texts[static_cast<size_t>(i)]).text_states);
  }
  VarT<S> sims = sim_matrix(c, model, query_blocks, text_blocks);
  Stage1Parts<S> out;
  if (use_cmc) out.cmc = info_nce(sims, tau);
  if (use_cmm) {
    HardNegatives negs = mine_hard_negatives(sims.val(), tau, rng);
    out.cmm = loss_cmm(c, model, mols, texts, negs);
  }
  if (use_cmc && use_cmm)
    out.total = add(out.cmc, out.cmm);
  else
    out.total = use_cmc ? out.cmc : out.cmm;
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2: knowledge incorporation
// ---------------------------------------------------------------------------

/// Homogeneous-category batch of resolved triplets.
struct TripletBatch {
  TripletCategory category;
  std::vector<ResolvedTriplet> items;
};

inline TripletBatch make_batch(const KnowledgeGraph& kg, const std::vector<int>& indices) {
  require(!indices.empty(), ErrorKind::Sampling, "make_batch: empty index list");
  TripletBatch batch;
  batch.category = categorize(kg.triplet(indices[0]));
  for (int idx : indices) {
    ResolvedTriplet r = resolve(kg, kg.triplet(idx));
    require(r.category == batch.category, ErrorKind::Category,
            "make_batch: mixed categories in one batch");
    batch.items.push_back(std::move(r));
  }
  return batch;
}

/// Relation-transformed head representation: fused encoding with the
/// relation as prompt for molecule heads, text encoding of head + relation
/// for text heads.
template <class S>
FusionOut<S> relation_transform(Ctx<S>& c, ModelT<S>& model, const ResolvedTriplet& t,
                                const Vocab& vocab) {
  const int max_len = model.cfg.max_text_len;
  if (t.head_mol != nullptr) {
    TokenSequence prompt = encode(t.relation, vocab, /*add_cls=*/true, max_len);
    return model.encoder.forward_fused(c, *t.head_mol, prompt);
  }
  require(t.head_text != nullptr, ErrorKind::Resolution, "relation_transform: unresolved head");
  TokenSequence head = encode(*t.head_text, vocab, true, max_len);
  TokenSequence rel = encode(t.relation, vocab, false, max_len);
  return model.encoder.forward_text(c, concat_texts(head, rel, max_len));
}

/// Tail entity representation: struct-only for molecules (no relation
/// attaches to the tail), text encoding for texts.
template <class S>
FusionOut<S> encode_tail(Ctx<S>& c, ModelT<S>& model, const ResolvedTriplet& t,
                         const Vocab& vocab) {
  if (t.tail_mol != nullptr) return model.encoder.forward_struct(c, *t.tail_mol);
  require(t.tail_text != nullptr, ErrorKind::Resolution, "encode_tail: unresolved tail");
  return model.encoder.forward_text(c, encode(*t.tail_text, vocab, true, model.cfg.max_text_len));
}

/// Per-category triplet similarity:
///   MolText  - max_i  proj(q_i)    . proj(cls_tail)
///   MolMol   - max_ij proj(q_i)    . proj(q_tail_j)
///   TextText -        proj(cls_hr) . proj(cls_tail)
template <class S>
VarT<S> sim_tri(Ctx<S>& c, ModelT<S>& model, const FusionOut<S>& zhr, const FusionOut<S>& tail,
                TripletCategory category) {
  switch (category) {
    case TripletCategory::MolText: {
      require(zhr.query_states.valid() && tail.text_states.valid(), ErrorKind::Shape,
              "sim_tri: MolText expects fused head and text tail");
      return sim(c, model, zhr.query_states, tail.text_states);
    }
    case TripletCategory::MolMol: {
      require(zhr.query_states.valid() && tail.query_states.valid(), ErrorKind::Shape,
              "sim_tri: MolMol expects query states on both sides");
      VarT<S> ph = model.project(c, zhr.query_states);
      VarT<S> pt = model.project(c, tail.query_states);
      return reduce_max_all(matmul(ph, transpose(pt)));
    }
    case TripletCategory::TextText: {
      require(zhr.text_states.valid() && tail.text_states.valid(), ErrorKind::Shape,
              "sim_tri: TextText expects text states on both sides");
      VarT<S> ph = project_cls(c, model, zhr.text_states);
      VarT<S> pt = project_cls(c, model, tail.text_states);
      return reduce_max_all(matmul(ph, transpose(pt)));
    }
  }
  fail(ErrorKind::Category, "sim_tri: unknown category");
}

/// B x B sim_tri matrix between relation-transformed heads and tails.
template <class S>
VarT<S> sim_tri_matrix(Ctx<S>& c, ModelT<S>& model, const std::vector<FusionOut<S>>& heads,
                       const std::vector<FusionOut<S>>& tails, TripletCategory category) {
  const int b = static_cast<int>(heads.size());
  require(static_cast<int>(tails.size()) == b && b >= 1, ErrorKind::Shape,
          "sim_tri_matrix: head/tail count mismatch");
  switch (category) {
    case TripletCategory::MolText: {
      std::vector<VarT<S>> query_blocks, text_blocks;
      for (const auto& h : heads) query_blocks.push_back(h.query_states);
      for (const auto& t : tails) text_blocks.push_back(t.text_states);
      return sim_matrix(c, model, query_blocks, text_blocks);
    }
    case TripletCategory::MolMol: {
      std::vector<VarT<S>> rows;
      for (const auto& h : heads) {
        VarT<S> ph = model.project(c, h.query_states);
        std::vector<VarT<S>> entries;
        for (const auto& t : tails) {
          VarT<S> pt = model.project(c, t.query_states);
          entries.push_back(reduce_max_all(matmul(ph, transpose(pt))));
        }
        rows.push_back(concat_cols(entries));
      }
      return concat_rows(rows);
    }
    case TripletCategory::TextText: {
      std::vector<VarT<S>> hrows, trows;
      for (const auto& h : heads) hrows.push_back(project_cls(c, model, h.text_states));
      for (const auto& t : tails) trows.push_back(project_cls(c, model, t.text_states));
      return matmul(concat_rows(hrows), transpose(concat_rows(trows)));
    }
  }
  fail(ErrorKind::Category, "sim_tri_matrix: unknown category");
}

/// Knowledge-graph embedding contrastive loss: symmetric InfoNCE over
/// sim_tri with in-batch negatives — the other relation-transformed heads on
/// one side and the other encoded tails on the other.
template <class S>
VarT<S> loss_kge_c(Ctx<S>& c, ModelT<S>& model, const TripletBatch& batch, const Vocab& vocab,
                   double tau) {
  std::vector<FusionOut<S>> heads, tails;
  for (const auto& item : batch.items) {
    require(item.category == batch.category, ErrorKind::Category,
            "loss_kge_c: mixed categories in one batch");
    heads.push_back(relation_transform(c, model, item, vocab));
    tails.push_back(encode_tail(c, model, item, vocab));
  }
  return info_nce(sim_tri_matrix(c, model, heads, tails, batch.category), tau);
}

namespace detail_obj {

/// Matching input of Eq. 12: molecule heads pair the structure with the
/// prompt r (+) t; text heads run h (+) r (+) t through the text branch.
template <class S>
VarT<S> kge_match_logits(Ctx<S>& c, ModelT<S>& model, const ResolvedTriplet& head_item,
                         const std::string& tail_text, const Vocab& vocab) {
  const int max_len = model.cfg.max_text_len;
  TokenSequence rel = encode(head_item.relation, vocab, true, max_len);
  TokenSequence tail = encode(tail_text, vocab, false, max_len);
  TokenSequence rel_tail = concat_texts(rel, tail, max_len);
  if (head_item.head_mol != nullptr) {
    auto fused = model.encoder.forward_fused(c, *head_item.head_mol, rel_tail);
    return model.match_logits(c, fused.query_states);
  }
  TokenSequence head = encode(*head_item.head_text, vocab, true, max_len);
  auto enc = model.encoder.forward_text(c, concat_texts(head, rel_tail, max_len));
  return model.match_logits(c, enc.text_states);
}

}  // namespace detail_obj

/// Knowledge-graph embedding matching loss. Molecule-molecule triplets are
/// excluded (the encoder cannot fuse two molecules). Rows per sample:
/// (positive, tail-swapped, head-swapped), labels (1, 0, 0).
template <class S>
VarT<S> loss_kge_m(Ctx<S>& c, ModelT<S>& model, const TripletBatch& batch, const Vocab& vocab,
                   const HardNegatives& negatives) {
  require(batch.category != TripletCategory::MolMol, ErrorKind::Category,
          "loss_kge_m: molecule-molecule triplets are excluded");
  const int b = static_cast<int>(batch.items.size());
  require(static_cast<int>(negatives.neg_text_for_mol.size()) == b &&
              static_cast<int>(negatives.neg_mol_for_text.size()) == b,
          ErrorKind::Shape, "loss_kge_m: negatives do not match the batch");
  auto tail_text_of = [&](const ResolvedTriplet& item) -> const std::string& {
    require(item.tail_text != nullptr, ErrorKind::Category,
            "loss_kge_m: tails must be text entities");
    return *item.tail_text;
  };
  std::vector<VarT<S>> rows;
  std::vector<int> labels;
  for (int i = 0; i < b; ++i) {
    const auto& item = batch.items[static_cast<size_t>(i)];
    const int tn = negatives.neg_text_for_mol[static_cast<size_t>(i)];
    const int hn = negatives.neg_mol_for_text[static_cast<size_t>(i)];
    require(tn != i && hn != i, ErrorKind::Value, "loss_kge_m: negative equals the positive");
    rows.push_back(detail_obj::kge_match_logits(c, model, item, tail_text_of(item), vocab));
    labels.push_back(1);
    // corrupted tail, same (h, r)
    rows.push_back(detail_obj::kge_match_logits(
        c, model, item, tail_text_of(batch.items[static_cast<size_t>(tn)]), vocab));
    labels.push_back(0);
    // corrupted head, same (r, t)
    ResolvedTriplet swapped = batch.items[static_cast<size_t>(hn)];
    swapped.relation = item.relation;
    rows.push_back(detail_obj::kge_match_logits(c, model, swapped, tail_text_of(item), vocab));
    labels.push_back(0);
  }
  return cross_entropy(concat_rows(rows), labels);
}

/// Decoder target for a tail text: [BOS] body, labels body [EOS].
inline std::pair<TokenSequence, std::vector<int>> kgc_target(const std::string& tail_text,
                                                             const Vocab& vocab, int max_gen_len) {
  TokenSequence body = encode(tail_text, vocab, /*add_cls=*/false, max_gen_len);
  TokenSequence input;
  input.ids.push_back(kBos);
  std::vector<int> labels;
  for (int id : body.ids) {
    input.ids.push_back(id);
    labels.push_back(id);
  }
  labels.push_back(kEos);
  return {input, labels};
}

/// Knowledge-graph completion loss: teacher-forced tail generation
/// conditioned on the relation-transformed head, averaged per token and then
/// over the batch. Molecule tails never reach the decoder. `heads` may carry
/// already-computed relation transforms of the batch items.
template <class S>
VarT<S> loss_kgc(Ctx<S>& c, ModelT<S>& model, const TripletBatch& batch, const Vocab& vocab,
                 const std::vector<FusionOut<S>>* heads = nullptr) {
  require(batch.category != TripletCategory::MolMol, ErrorKind::Category,
          "loss_kgc: molecule-molecule triplets are excluded");
  std::vector<VarT<S>> per_triplet;
  for (size_t i = 0; i < batch.items.size(); ++i) {
    const auto& item = batch.items[i];
    require(item.tail_text != nullptr, ErrorKind::Category, "loss_kgc: tails must be text");
    FusionOut<S> zhr = heads != nullptr ? (*heads)[i] : relation_transform(c, model, item, vocab);
    VarT<S> cond = zhr.query_states.valid() ? zhr.query_states : zhr.text_states;
    auto [input, labels] = kgc_target(*item.tail_text, vocab, model.cfg.max_gen_len);
    VarT<S> logits = model.decoder.forward_teacher(c, cond, input);
    per_triplet.push_back(cross_entropy(logits, labels));
  }
  VarT<S> total = per_triplet[0];
  for (size_t i = 1; i < per_triplet.size(); ++i) total = add(total, per_triplet[i]);
  return div_const(total, static_cast<S>(per_triplet.size()));
}

template <class S>
struct Stage2Parts {
  VarT<S> total;
  VarT<S> kge_c;
  VarT<S> kge_m;  // invalid on MolMol batches or when disabled
  VarT<S> kgc;    // invalid on MolMol batches or when disabled
};

/// Stage-2 objective over a homogeneous-category batch. The matching and
/// completion terms contribute nothing on molecule-molecule batches.
template <class S>
Stage2Parts<S> stage2_loss(Ctx<S>& c, ModelT<S>& model, const TripletBatch& batch,
                           const Vocab& vocab, double tau, Rng& rng, bool use_kge_c = true,
                           bool use_kge_m = true, bool use_kgc = true) {
  require(use_kge_c || use_kge_m || use_kgc, ErrorKind::Config,
          "stage2_loss: all objectives disabled");
  const bool molmol = batch.category == TripletCategory::MolMol;
  Stage2Parts<S> out;
  std::vector<VarT<S>> terms;
  VarT<S> sims;  // shared between the contrastive term and negative mining
  std::vector<FusionOut<S>> heads;
  const bool need_heads = use_kge_c || (!molmol && (use_kge_m || use_kgc));
  if (need_heads) {
    std::vector<FusionOut<S>> tails;
    for (const auto& item : batch.items) {
      require(item.category == batch.category, ErrorKind::Category,
              "stage2_loss: mixed categories in one batch");
      heads.push_back(relation_transform(c, model, item, vocab));
      tails.push_back(encode_tail(c, model, item, vocab));
    }
    if (use_kge_c || (use_kge_m && !molmol && batch.items.size() >= 2))
      sims = sim_tri_matrix(c, model, heads, tails, batch.category);
  }
  if (use_kge_c) {
    out.kge_c = info_nce(sims, tau);
    terms.push_back(out.kge_c);
  }
  if (use_kge_m && !molmol && batch.items.size() >= 2) {
    HardNegatives negs = mine_hard_negatives(sims.val(), tau, rng);
    out.kge_m = loss_kge_m(c, model, batch, vocab, negs);
    terms.push_back(out.kge_m);
  }
  if (use_kgc && !molmol) {
    out.kgc = loss_kgc(c, model, batch, vocab, &heads);
    terms.push_back(out.kgc);
  }
  require(!terms.empty(), ErrorKind::Config, "stage2_loss: no objective applies to this batch");
  out.total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  return out;
}

}  // namespace mvmol
