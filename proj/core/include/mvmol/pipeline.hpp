#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvmol/checkpoint.hpp"
#include "mvmol/config.hpp"
#include "mvmol/corpus.hpp"
#include "mvmol/metrics.hpp"
#include "mvmol/objectives.hpp"
#include "mvmol/optim.hpp"

namespace mvmol {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Aligned molecule-text pairs for stage-1 training and pair retrieval.
struct PairDataset {
  std::vector<const Molecule*> mols;
  std::vector<TokenSequence> texts;
  std::vector<std::string> text_ids;
  std::vector<std::string> raw_texts;

  int size() const { return static_cast<int>(mols.size()); }
};

/// All (molecule, view text) pairs of a corpus, optionally restricted to one
/// split. Views are deliberately not annotated on the pairs.
PairDataset make_pairs(const SynthCorpus& corpus, const Vocab& vocab, int max_len,
                       std::optional<Split> split = std::nullopt);

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

struct TrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
  std::string final_checkpoint;  // empty when out_dir was empty
};

/// Stage 1 (modality alignment): contrastive + matching over pair batches.
/// Deterministic in (model state, cfg.seed, data). Writes loss_stage1.csv and
/// periodic checkpoints when out_dir is nonempty.
TrainResult train_stage1(Model& model, const PairDataset& pairs, const TrainConfig& cfg,
                         const std::string& out_dir = "");

/// Stage 2 (knowledge incorporation): per step one homogeneous-category
/// batch, category chosen proportionally to counts unless the config
/// overrides the weights.
TrainResult train_stage2(Model& model, const KnowledgeGraph& kg, const Vocab& vocab,
                         const TrainConfig& cfg, const std::string& out_dir = "");

// ---------------------------------------------------------------------------
// Embedding and retrieval
// ---------------------------------------------------------------------------

/// Projected, unit-norm embeddings. Molecules keep their full K x d_proj
/// block (the similarity maximizes over the K rows); texts keep the single
/// projected [CLS] row.
struct RetrievalIndex {
  enum class Kind { Mol, Text };
  Kind kind = Kind::Text;
  std::vector<std::string> ids;
  std::vector<Tensor> blocks;
  std::string view_tag;  // prompt preset/view used, empty when none
  // side table for re-ranking forward passes
  std::vector<const Molecule*> mols;
  std::vector<std::string> raw_texts;
};

/// StructOnly when prompt is empty, Fused with the prompt otherwise.
RetrievalIndex embed_molecules(Model& model, const std::vector<const Molecule*>& mols,
                               const Vocab& vocab, const std::string& prompt = "",
                               const std::string& view_tag = "");

RetrievalIndex embed_texts(Model& model, const std::vector<std::string>& ids,
                           const std::vector<std::string>& texts, const Vocab& vocab);

/// max over all row pairs of the two unit-norm blocks; the sim convention
/// for every block shape combination.
double block_score(const Tensor& a, const Tensor& b);

struct RankedItem {
  std::string id;
  int index = 0;  // into the index
  double score = 0.0;
};

/// Full ranking of the index for one query. Stage 1 ranks by similarity;
/// when alpha < 1 the top min(k, N) candidates are re-scored by
/// alpha * sim + (1 - alpha) * match-logit via fused forward passes and
/// re-sorted (stable, ties by candidate id). alpha = 1 reproduces the
/// similarity ranking exactly.
std::vector<RankedItem> retrieve(Model& model, const Vocab& vocab, const Tensor& query_block,
                                 const Molecule* query_mol, const std::string* query_text,
                                 const RetrievalIndex& index, int k, double alpha);

struct RetrievalEval {
  RetrievalMetrics s2t;
  RetrievalMetrics t2s;
};

/// Zero-shot retrieval over aligned pairs, both directions, rank of the true
/// partner per query.
RetrievalEval eval_pair_retrieval(Model& model, const PairDataset& pairs, const Vocab& vocab,
                                  int k, double alpha, const std::string& mol_prompt = "");

// ---------------------------------------------------------------------------
// Downstream tasks
// ---------------------------------------------------------------------------

struct FinetuneResult {
  double val_auroc = 0.0;
  double test_auroc = 0.0;
  int best_epoch = -1;
};

/// Binary property prediction: max-pooled query states (fused with the view
/// prompt, struct-only when the prompt is empty) into the two-layer ReLU
/// head. Split 8/1/1 by structural hash, early stopping on validation AUROC,
/// the best epoch's parameters are restored before the test evaluation.
FinetuneResult finetune_property(Model& model, const std::vector<const Molecule*>& mols,
                                 const std::vector<int>& labels, const std::string& view_prompt,
                                 const Vocab& vocab, const TrainConfig& cfg);

struct PromptVariant {
  std::string name;
  std::string prompt;  // empty = the no-view pathway
};

/// Runs finetune_property once per variant from the same initial weights and
/// seed; one CSV row per variant when out_csv is nonempty.
std::vector<std::pair<PromptVariant, FinetuneResult>> prompt_variant_eval(
    const Model& base_model, const std::vector<const Molecule*>& mols,
    const std::vector<int>& labels, const std::vector<PromptVariant>& variants,
    const Vocab& vocab, const TrainConfig& cfg, const std::string& out_csv = "");

/// Decoder conditioning for captioning: fused query states concatenated with
/// the embedded linear serialization of the molecule.
Tensor caption_condition(Model& model, const Molecule& mol, const std::string& prompt,
                         const Vocab& vocab);

std::string caption(Model& model, const Molecule& mol, const std::string& prompt,
                    const Vocab& vocab, int max_len = 0);

/// Teacher-forced caption training on (molecule, text) pairs.
void train_caption(Model& model, const std::vector<const Molecule*>& mols,
                   const std::vector<std::string>& targets, const std::string& prompt,
                   const Vocab& vocab, const TrainConfig& cfg);

/// Text-based molecule generation: decoder conditioned on the text states.
std::string generate_molecule(Model& model, const std::string& text, const Vocab& vocab,
                              int max_len = 0);

void train_text_to_mol(Model& model, const std::vector<std::string>& texts,
                       const std::vector<const Molecule*>& targets, const Vocab& vocab,
                       const TrainConfig& cfg);

/// Fraction of generations that parse under the linear-notation checker.
double generation_validity(Model& model, const std::vector<std::string>& texts,
                           const Vocab& vocab);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// CSV: header "id,view,v0,v1,...", one row per item, block flattened
/// row-major, values printed so a re-read stays within 1e-6.
void export_embeddings(const RetrievalIndex& index, const std::string& path);

RetrievalIndex read_embeddings_csv(const std::string& path);

}  // namespace mvmol
