#pragma once

#include <vector>

#include "mvmol/config.hpp"
#include "mvmol/nn.hpp"
#include "mvmol/text.hpp"

namespace mvmol {

struct GenerationParams {
  int max_len = 64;  // number of generated tokens, [EOS] included
};

/// Causal text decoder with cross-attention to encoder states in every
/// layer. Greedy argmax decoding only.
template <class S>
struct DecLayerP {
  LnP<S> ln_self;
  AttnP<S> self_attn;
  LnP<S> ln_cross;
  AttnP<S> cross_attn;
  LnP<S> ln_ffn;
  FfnP<S> ffn;

  void init(int d, int heads, Rng& rng) {
    ln_self.init(d);
    self_attn.init(d, heads, rng);
    ln_cross.init(d);
    cross_attn.init(d, heads, rng);
    ln_ffn.init(d);
    ffn.init(d, 4 * d, rng);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    ln_self.collect(prefix + ".ln_self", out);
    self_attn.collect(prefix + ".self_attn", out);
    ln_cross.collect(prefix + ".ln_cross", out);
    cross_attn.collect(prefix + ".cross_attn", out);
    ln_ffn.collect(prefix + ".ln_ffn", out);
    ffn.collect(prefix + ".ffn", out);
  }
};

template <class S>
struct DecoderT {
  ModelConfig cfg;
  TensorT<S> token_embed;  // vocab x d
  TensorT<S> pos_embed;    // (max_gen_len + 2) x d
  std::vector<DecLayerP<S>> layers;
  LnP<S> final_ln;
  LinearP<S> out_proj;  // d x vocab

  void init(const ModelConfig& config, Rng& rng) {
    cfg = config;
    token_embed = TensorT<S>::randn({cfg.vocab_size, cfg.d_model}, rng, 0.02);
    token_embed.requires_grad = true;
    pos_embed = TensorT<S>::randn({cfg.max_gen_len + 2, cfg.d_model}, rng, 0.02);
    pos_embed.requires_grad = true;
    layers.resize(static_cast<size_t>(cfg.decoder_layers));
    for (auto& layer : layers) layer.init(cfg.d_model, cfg.n_heads, rng);
    final_ln.init(cfg.d_model);
    out_proj.init(cfg.d_model, cfg.vocab_size, rng);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    out.emplace_back(prefix + ".token_embed", &token_embed);
    out.emplace_back(prefix + ".pos_embed", &pos_embed);
    for (size_t l = 0; l < layers.size(); ++l)
      layers[l].collect(prefix + ".layer" + std::to_string(l), out);
    final_ln.collect(prefix + ".final_ln", out);
    out_proj.collect(prefix + ".out_proj", out);
  }

  /// Teacher-forced logits, N x vocab. Position i conditions on target[0..i]
  /// and z only: causal self-attention plus cross-attention to z.
  VarT<S> forward_teacher(Ctx<S>& c, VarT<S> z, const TokenSequence& target) {
    const int n = target.length();
    require(n >= 1, ErrorKind::Validation, "decoder: empty target");
    require(target.ids[0] == kBos, ErrorKind::Validation, "decoder: target must start with [BOS]");
    require(n <= pos_embed_rows(), ErrorKind::Capacity,
            "decoder: target of length " + std::to_string(n) + " exceeds max_gen_len");
    for (int id : target.ids)
      require(id >= 0 && id < cfg.vocab_size, ErrorKind::Validation,
              "decoder: token id outside the vocabulary");
    VarT<S> x = add(embed_rows(c.use(token_embed), target.ids),
                    slice_rows(c.use(pos_embed), 0, n));
    const std::vector<uint8_t> causal = causal_mask(n);
    for (auto& layer : layers) {
      VarT<S> normed = layer.ln_self(c, x);
      x = add(x, layer.self_attn(c, normed, normed, &causal));
      x = add(x, layer.cross_attn(c, layer.ln_cross(c, x), z));
      x = add(x, layer.ffn(c, layer.ln_ffn(c, x)));
    }
    return out_proj(c, final_ln(c, x));
  }

  /// Greedy argmax rollout from [BOS]; stops at [EOS] or max_len generated
  /// tokens. Pure function of (weights, z, params).
  TokenSequence generate(const TensorT<S>& z_states, const GenerationParams& params) {
    require(params.max_len >= 1 && params.max_len <= cfg.max_gen_len, ErrorKind::Config,
            "generate: max_len out of range");
    TokenSequence seq;
    seq.ids.push_back(kBos);
    for (int step = 0; step < params.max_len; ++step) {
      TapeT<S> tape;
      Ctx<S> c(tape);
      VarT<S> logits = forward_teacher(c, c.constant(z_states), seq);
      const TensorT<S>& lv = logits.val();
      const int last = lv.rows() - 1;
      int best = 0;
      for (int j = 1; j < lv.cols(); ++j)
        if (lv.at(last, j) > lv.at(last, best)) best = j;
      seq.ids.push_back(best);
      if (best == kEos) break;
    }
    return seq;
  }

  int pos_embed_rows() const { return cfg.max_gen_len + 2; }
};

}  // namespace mvmol
