// Command-line front end: corpus synthesis, two-stage pre-training,
// embedding/retrieval, property fine-tuning, captioning and generation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "mvmol/checkpoint.hpp"
#include "mvmol/grad_suite.hpp"
#include "mvmol/pipeline.hpp"
#include "mvmol/presets.hpp"

using namespace mvmol;

namespace {

struct DataBundle {
  SynthCorpus corpus;
  Vocab vocab;
  KnowledgeGraph kg;
};

DataBundle load_data(const std::string& data_dir) {
  DataBundle d;
  d.corpus = load_corpus(data_dir);
  d.vocab = Vocab::load(data_dir + "/vocab.txt");
  d.kg = KnowledgeGraph::ingest(data_dir + "/triplets.tsv", d.corpus.molecules, d.corpus.texts);
  return d;
}

ModelConfig model_config_for(const std::string& config_path, const Vocab& vocab,
                             const SynthCorpus& corpus) {
  ModelConfig mc;
  mc.atom_alphabet = corpus.spec.atom_alphabet;
  if (!config_path.empty()) ConfigFile::parse_file(config_path).apply(&mc, nullptr);
  if (mc.vocab_size == 0) mc.vocab_size = vocab.size();
  mc.validate();
  return mc;
}

TrainConfig train_config_for(const std::string& config_path, uint64_t seed_flag, bool seed_set) {
  TrainConfig tc;
  if (!config_path.empty()) ConfigFile::parse_file(config_path).apply(nullptr, &tc);
  if (seed_set) tc.seed = seed_flag;
  return tc;
}

Model load_or_init(const std::string& checkpoint, const std::string& config_path,
                   const DataBundle& data, uint64_t seed) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  Model model;
  model.init(model_config_for(config_path, data.vocab, data.corpus), seed);
  return model;
}

std::string resolve_prompt(const std::string& prompt, const std::string& preset) {
  if (!preset.empty()) return preset_prompt(preset);
  return prompt;
}

std::optional<Split> parse_split(const std::string& name) {
  if (name == "all") return std::nullopt;
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  fail(ErrorKind::Config, "unknown split '" + name + "'");
}

/// The synthetic separable property label: atom type 3 present and at least
/// one ring.
int property_label(const Molecule& m) {
  bool has3 = false;
  for (int a : m.atoms) has3 |= a == 3;
  return has3 && m.ring_count() >= 1 ? 1 : 0;
}

std::vector<const Molecule*> split_mols(const SynthCorpus& corpus, std::optional<Split> split) {
  std::vector<const Molecule*> out;
  for (const auto& m : corpus.molecules) {
    if (split.has_value() && corpus.split_of.at(m.id) != *split) continue;
    out.push_back(&m);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvmol: view-conditioned molecular representation learning"};
  app.require_subcommand(1);

  // common option storage
  std::string data_dir, config_path, checkpoint, out_dir = ".", prompt, preset;
  uint64_t seed = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    if (needs_data) cmd->add_option("--data-dir", data_dir, "corpus directory")->required();
    cmd->add_option("--config", config_path, "flat key=value config file");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--checkpoint", checkpoint, "checkpoint to load");
    cmd->add_option("--out-dir", out_dir, "output directory");
  };

  // synth-gen
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic multi-view corpus");
  int synth_n = 64, atoms_min = 4, atoms_max = 12;
  std::string views_arg = "chemical,physical,pharmacokinetic";
  synth->add_option("--n", synth_n, "number of molecules");
  synth->add_option("--views", views_arg, "comma-separated view subset");
  synth->add_option("--atoms-min", atoms_min);
  synth->add_option("--atoms-max", atoms_max);
  add_common(synth, false);

  // pretraining
  auto* stage1 = app.add_subcommand("pretrain-stage1", "modality alignment over molecule-text pairs");
  std::string split_arg = "all";
  stage1->add_option("--split", split_arg, "train|val|test|all");
  add_common(stage1, true);

  auto* stage2 = app.add_subcommand("pretrain-stage2", "knowledge incorporation over the triplet graph");
  bool no_kge_c = false, no_kge_m = false, no_kgc = false;
  stage2->add_flag("--no-kge-c", no_kge_c, "disable the embedding contrastive objective");
  stage2->add_flag("--no-kge-m", no_kge_m, "disable the embedding matching objective");
  stage2->add_flag("--no-kgc", no_kgc, "disable the completion objective");
  add_common(stage2, true);

  // embedding / retrieval
  auto* embed_cmd = app.add_subcommand("embed", "embed molecules or texts into an index CSV");
  std::string items_arg = "mol";
  embed_cmd->add_option("--items", items_arg, "mol|text");
  embed_cmd->add_option("--split", split_arg, "train|val|test|all");
  embed_cmd->add_option("--prompt", prompt, "view prompt (empty = struct-only)");
  embed_cmd->add_option("--preset", preset, "named preset prompt");
  add_common(embed_cmd, true);

  auto* export_cmd = app.add_subcommand("export-emb", "export embeddings to an explicit CSV path");
  std::string export_path;
  export_cmd->add_option("--out", export_path, "output CSV file")->required();
  export_cmd->add_option("--items", items_arg, "mol|text");
  export_cmd->add_option("--split", split_arg, "train|val|test|all");
  export_cmd->add_option("--prompt", prompt, "view prompt (empty = struct-only)");
  export_cmd->add_option("--preset", preset, "named preset prompt");
  add_common(export_cmd, true);

  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank candidates for one query");
  std::string query_id, direction = "s2t";
  int top_k = 32;
  double alpha = 0.8;
  retrieve_cmd->add_option("--query-id", query_id, "molecule id (s2t) or text id (t2s)")->required();
  retrieve_cmd->add_option("--direction", direction, "s2t|t2s");
  retrieve_cmd->add_option("--k", top_k, "re-ranking depth");
  retrieve_cmd->add_option("--alpha", alpha, "similarity weight in the ensemble score");
  retrieve_cmd->add_option("--split", split_arg, "candidate split");
  retrieve_cmd->add_option("--prompt", prompt, "view prompt for molecule embeddings");
  retrieve_cmd->add_option("--preset", preset, "named preset prompt");
  add_common(retrieve_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval-retrieval", "zero-shot retrieval metrics on a split");
  eval_cmd->add_option("--k", top_k, "re-ranking depth");
  eval_cmd->add_option("--alpha", alpha, "similarity weight in the ensemble score");
  eval_cmd->add_option("--split", split_arg, "train|val|test|all");
  eval_cmd->add_option("--prompt", prompt, "view prompt for molecule embeddings");
  eval_cmd->add_option("--preset", preset, "named preset prompt");
  add_common(eval_cmd, true);

  // downstream
  auto* finetune_cmd = app.add_subcommand("finetune-prop", "binary property prediction fine-tune");
  finetune_cmd->add_option("--prompt", prompt, "view prompt (empty = no-view pathway)");
  finetune_cmd->add_option("--preset", preset, "named preset prompt");
  add_common(finetune_cmd, true);

  auto* prompt_eval_cmd = app.add_subcommand("prompt-eval", "compare prompt variants on the property task");
  std::string word_prompt = "bbbp";
  std::string sentence_prompt = preset_prompt("bbbp");
  std::string paragraph_prompt =
      "blood-brain barrier penetration (permeability) ; a binary property describing whether the "
      "molecule crosses the blood-brain barrier ; measured over a diverse compound collection";
  prompt_eval_cmd->add_option("--word", word_prompt, "word variant");
  prompt_eval_cmd->add_option("--sentence", sentence_prompt, "sentence variant");
  prompt_eval_cmd->add_option("--paragraph", paragraph_prompt, "paragraph variant");
  add_common(prompt_eval_cmd, true);

  auto* caption_cmd = app.add_subcommand("caption", "generate a text for a molecule");
  std::string mol_id;
  caption_cmd->add_option("--mol-id", mol_id, "molecule id")->required();
  caption_cmd->add_option("--prompt", prompt, "view prompt");
  caption_cmd->add_option("--preset", preset, "named preset prompt (default: retrieval)");
  add_common(caption_cmd, true);

  auto* genmol_cmd = app.add_subcommand("gen-mol", "generate a molecule string from text");
  std::string gen_text;
  bool report_validity = false;
  genmol_cmd->add_option("--text", gen_text, "description text");
  genmol_cmd->add_flag("--validity", report_validity, "report validity rate over the chosen split");
  genmol_cmd->add_option("--split", split_arg, "split for --validity");
  add_common(genmol_cmd, true);

  auto* stats_cmd = app.add_subcommand("kg-stats", "entity and relation tallies of the triplet graph");
  add_common(stats_cmd, true);

  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite (double precision)");
  add_common(grad_cmd, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      CorpusSpec spec;
      spec.n_molecules = synth_n;
      spec.atoms_min = atoms_min;
      spec.atoms_max = atoms_max;
      if (seed_set) spec.seed = seed;
      spec.views.clear();
      std::stringstream ss(views_arg);
      std::string item;
      while (std::getline(ss, item, ',')) spec.views.push_back(view_from_name(item));
      SynthCorpus corpus = synth_corpus(spec);
      save_corpus(corpus, out_dir);
      KnowledgeGraph kg =
          KnowledgeGraph::from_triplets(corpus.triplets, corpus.molecules, corpus.texts);
      std::cout << "wrote " << corpus.molecules.size() << " molecules, " << corpus.texts.size()
                << " texts, " << kg.size() << " triplets to " << out_dir << "\n";
      return 0;
    }

    if (stage1->parsed()) {
      DataBundle data = load_data(data_dir);
      Model model = load_or_init(checkpoint, config_path, data, seed_set ? seed : 0);
      TrainConfig tc = train_config_for(config_path, seed, seed_set);
      tc.stage = 1;
      PairDataset pairs =
          make_pairs(data.corpus, data.vocab, model.cfg.max_text_len, parse_split(split_arg));
      TrainResult r = train_stage1(model, pairs, tc, out_dir);
      std::cout << "stage1: steps=" << tc.steps << " initial=" << r.initial_loss
                << " final=" << r.final_loss << " checkpoint=" << r.final_checkpoint << "\n";
      return 0;
    }

    if (stage2->parsed()) {
      DataBundle data = load_data(data_dir);
      Model model = load_or_init(checkpoint, config_path, data, seed_set ? seed : 0);
      TrainConfig tc = train_config_for(config_path, seed, seed_set);
      tc.stage = 2;
      if (no_kge_c) tc.use_kge_c = false;
      if (no_kge_m) tc.use_kge_m = false;
      if (no_kgc) tc.use_kgc = false;
      TrainResult r = train_stage2(model, data.kg, data.vocab, tc, out_dir);
      std::cout << "stage2: steps=" << tc.steps << " initial=" << r.initial_loss
                << " final=" << r.final_loss << " checkpoint=" << r.final_checkpoint << "\n";
      return 0;
    }

    if (embed_cmd->parsed() || export_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      require(!checkpoint.empty(), ErrorKind::Config, "embed: --checkpoint is required");
      Model model = load_checkpoint(checkpoint);
      const std::string p = resolve_prompt(prompt, preset);
      RetrievalIndex index;
      if (items_arg == "mol") {
        index = embed_molecules(model, split_mols(data.corpus, parse_split(split_arg)),
                                data.vocab, p, preset.empty() ? p : preset);
      } else if (items_arg == "text") {
        std::vector<std::string> ids, texts;
        for (const auto& te : data.corpus.texts) {
          if (te.mol_id.empty()) continue;
          if (parse_split(split_arg).has_value() &&
              data.corpus.split_of.at(te.mol_id) != *parse_split(split_arg))
            continue;
          ids.push_back(te.id);
          texts.push_back(te.text);
        }
        index = embed_texts(model, ids, texts, data.vocab);
      } else {
        fail(ErrorKind::Config, "embed: --items must be mol or text");
      }
      const std::string path =
          export_cmd->parsed() ? export_path : out_dir + "/embeddings_" + items_arg + ".csv";
      export_embeddings(index, path);
      std::cout << "wrote " << index.ids.size() << " embeddings to " << path << "\n";
      return 0;
    }

    if (retrieve_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      require(!checkpoint.empty(), ErrorKind::Config, "retrieve: --checkpoint is required");
      Model model = load_checkpoint(checkpoint);
      const std::string p = resolve_prompt(prompt, preset);
      PairDataset pairs =
          make_pairs(data.corpus, data.vocab, model.cfg.max_text_len, parse_split(split_arg));
      std::vector<RankedItem> ranked;
      if (direction == "s2t") {
        const Molecule& query = data.kg.mol(query_id);
        RetrievalIndex text_index = embed_texts(model, pairs.text_ids, pairs.raw_texts, data.vocab);
        RetrievalIndex query_index = embed_molecules(model, {&query}, data.vocab, p);
        ranked = retrieve(model, data.vocab, query_index.blocks[0], &query, nullptr, text_index,
                          top_k, alpha);
      } else if (direction == "t2s") {
        const std::string& query_text = data.kg.text(query_id);
        RetrievalIndex mol_index = embed_molecules(model, pairs.mols, data.vocab, p);
        RetrievalIndex query_index = embed_texts(model, {query_id}, {query_text}, data.vocab);
        ranked = retrieve(model, data.vocab, query_index.blocks[0], nullptr, &query_text, mol_index,
                          top_k, alpha);
      } else {
        fail(ErrorKind::Config, "retrieve: --direction must be s2t or t2s");
      }
      const int shown = std::min<int>(top_k, static_cast<int>(ranked.size()));
      for (int i = 0; i < shown; ++i)
        std::cout << i + 1 << "\t" << ranked[size_t(i)].id << "\t" << ranked[size_t(i)].score
                  << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      require(!checkpoint.empty(), ErrorKind::Config, "eval-retrieval: --checkpoint is required");
      Model model = load_checkpoint(checkpoint);
      PairDataset pairs =
          make_pairs(data.corpus, data.vocab, model.cfg.max_text_len, parse_split(split_arg));
      RetrievalEval eval = eval_pair_retrieval(model, pairs, data.vocab, top_k, alpha,
                                               resolve_prompt(prompt, preset));
      std::cout << "S-T  mrr=" << eval.s2t.mrr << " r1=" << eval.s2t.r1 << " r5=" << eval.s2t.r5
                << " r10=" << eval.s2t.r10 << "\n";
      std::cout << "T-S  mrr=" << eval.t2s.mrr << " r1=" << eval.t2s.r1 << " r5=" << eval.t2s.r5
                << " r10=" << eval.t2s.r10 << "\n";
      write_metrics_csv(out_dir + "/retrieval_metrics.csv", {{"s2t", eval.s2t}, {"t2s", eval.t2s}});
      return 0;
    }

    if (finetune_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      Model model = load_or_init(checkpoint, config_path, data, seed_set ? seed : 0);
      TrainConfig tc = train_config_for(config_path, seed, seed_set);
      std::vector<const Molecule*> mols = split_mols(data.corpus, std::nullopt);
      std::vector<int> labels;
      for (const Molecule* m : mols) labels.push_back(property_label(*m));
      FinetuneResult r =
          finetune_property(model, mols, labels, resolve_prompt(prompt, preset), data.vocab, tc);
      std::cout << "finetune-prop: val_auroc=" << r.val_auroc << " test_auroc=" << r.test_auroc
                << " best_epoch=" << r.best_epoch << "\n";
      return 0;
    }

    if (prompt_eval_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      Model model = load_or_init(checkpoint, config_path, data, seed_set ? seed : 0);
      TrainConfig tc = train_config_for(config_path, seed, seed_set);
      std::vector<const Molecule*> mols = split_mols(data.corpus, std::nullopt);
      std::vector<int> labels;
      for (const Molecule* m : mols) labels.push_back(property_label(*m));
      std::vector<PromptVariant> variants = {{"empty", ""},
                                             {"word", word_prompt},
                                             {"sentence", sentence_prompt},
                                             {"paragraph", paragraph_prompt}};
      auto results = prompt_variant_eval(model, mols, labels, variants, data.vocab, tc,
                                         out_dir + "/prompt_variants.csv");
      for (const auto& [variant, r] : results)
        std::cout << variant.name << ": val_auroc=" << r.val_auroc
                  << " test_auroc=" << r.test_auroc << "\n";
      return 0;
    }

    if (caption_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      require(!checkpoint.empty(), ErrorKind::Config, "caption: --checkpoint is required");
      Model model = load_checkpoint(checkpoint);
      std::string p = resolve_prompt(prompt, preset);
      if (p.empty()) p = preset_prompt("retrieval");
      std::cout << caption(model, data.kg.mol(mol_id), p, data.vocab) << "\n";
      return 0;
    }

    if (genmol_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      require(!checkpoint.empty(), ErrorKind::Config, "gen-mol: --checkpoint is required");
      Model model = load_checkpoint(checkpoint);
      if (report_validity) {
        std::vector<std::string> texts;
        for (const auto& te : data.corpus.texts) {
          if (te.mol_id.empty()) continue;
          if (parse_split(split_arg).has_value() &&
              data.corpus.split_of.at(te.mol_id) != *parse_split(split_arg))
            continue;
          texts.push_back(te.text);
        }
        std::cout << "validity=" << generation_validity(model, texts, data.vocab) << " over "
                  << texts.size() << " texts\n";
        return 0;
      }
      require(!gen_text.empty(), ErrorKind::Config, "gen-mol: --text or --validity required");
      const std::string generated = generate_molecule(model, gen_text, data.vocab);
      const bool ok = parse_linear_notation(generated, nullptr);
      std::cout << generated << "\n" << (ok ? "valid" : "invalid") << "\n";
      return 0;
    }

    if (stats_cmd->parsed()) {
      DataBundle data = load_data(data_dir);
      std::cout << data.kg.stats_table();
      return 0;
    }

    if (grad_cmd->parsed()) {
      double worst = 0.0;
      for (const auto& entry : run_loss_grad_suite()) {
        std::cout << entry.loss << " wrt " << entry.parameter << ": max rel err "
                  << entry.max_rel_err << "\n";
        worst = std::max(worst, entry.max_rel_err);
      }
      std::cout << (worst <= 1e-4 ? "PASS" : "FAIL") << " (worst " << worst << ", tolerance 1e-4)\n";
      return worst <= 1e-4 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
