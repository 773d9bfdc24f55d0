#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mvmol/error.hpp"

namespace mvmol {

/// Architecture hyperparameters. Desk-scale defaults; the published-scale
/// values stay expressible (struct_layers=15, qformer_layers=12, ...).
struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int struct_layers = 2;
  int qformer_layers = 4;
  int decoder_layers = 2;
  int n_queries = 8;  // K
  int d_proj = 32;
  int max_text_len = 64;
  int max_atoms = 64;
  int max_gen_len = 64;
  int atom_alphabet = 8;
  int vocab_size = 0;
  double gaussian_sigma = 1.0;

  void validate() const {
    require(d_model >= 1 && d_model % n_heads == 0, ErrorKind::Config,
            "config: d_model must be divisible by n_heads");
    require(n_queries >= 1, ErrorKind::Config, "config: n_queries must be >= 1");
    require(qformer_layers >= 2, ErrorKind::Config, "config: qformer_layers must be >= 2");
    require(struct_layers >= 1 && decoder_layers >= 1, ErrorKind::Config,
            "config: layer counts must be >= 1");
    require(vocab_size > kMinVocab, ErrorKind::Config, "config: vocab_size not set");
    require(max_text_len >= 2 && max_gen_len >= 1, ErrorKind::Config, "config: bad text limits");
    require(gaussian_sigma > 0.0, ErrorKind::Config, "config: gaussian_sigma must be positive");
  }

  static constexpr int kMinVocab = 5;
};

struct TrainConfig {
  int stage = 1;
  int64_t steps = 500;
  int batch_size = 16;
  double peak_lr = 1e-3;
  double final_lr = 1e-5;
  int64_t warmup_steps = 50;
  double weight_decay = 5e-2;
  double tau = 0.1;  // fixed contrastive temperature
  double clip_norm = 1.0;  // global gradient-norm clip, <= 0 disables
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0 = only final
  // stage-1 / stage-2 objective toggles (the ablation grid)
  bool use_cmc = true;
  bool use_cmm = true;
  bool use_kge_c = true;
  bool use_kge_m = true;
  bool use_kgc = true;
  // stage-2 category sampling weights; <0 = proportional to counts
  double w_moltext = -1.0;
  double w_molmol = -1.0;
  double w_texttext = -1.0;
  // fine-tuning
  int max_epochs = 100;
  int patience = 20;

  void validate() const {
    require(stage == 1 || stage == 2, ErrorKind::Config, "config: stage must be 1 or 2");
    require(steps >= 1, ErrorKind::Config, "config: steps must be >= 1");
    require(warmup_steps < steps, ErrorKind::Config, "config: warmup_steps must be < steps");
    require(peak_lr > 0.0 && final_lr > 0.0, ErrorKind::Config, "config: lrs must be positive");
    require(batch_size >= 1, ErrorKind::Config, "config: batch_size must be >= 1");
    require(tau > 0.0, ErrorKind::Config, "config: tau must be positive");
  }
};

/// Flat key=value text config. '#' starts a comment; unknown keys are a
/// Config error so typos surface early.
struct ConfigFile {
  std::map<std::string, std::string> values;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& content);

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Reads recognized keys into the two configs, rejecting unknown keys.
  void apply(ModelConfig* model, TrainConfig* train) const;

  std::string serialize() const;
};

std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& text);

}  // namespace mvmol
