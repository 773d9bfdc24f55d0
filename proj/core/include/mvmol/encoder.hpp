#pragma once

#include <optional>
#include <vector>

#include "mvmol/config.hpp"
#include "mvmol/molecule.hpp"
#include "mvmol/nn.hpp"
#include "mvmol/text.hpp"

namespace mvmol {

enum class FusionMode { StructOnly, TextOnly, Fused };

/// Gaussian attention-bias kernel: exp(-d_ij^2 / (2 sigma^2)), 1 on the
/// diagonal.
template <class S>
TensorT<S> distance_kernel(const DistanceMatrix& dm, double sigma) {
  require(sigma > 0.0, ErrorKind::Config, "distance_kernel: sigma must be positive");
  TensorT<S> kernel = TensorT<S>::zeros({dm.n, dm.n});
  const double two_sigma_sq = 2.0 * sigma * sigma;
  for (int i = 0; i < dm.n; ++i)
    for (int j = 0; j < dm.n; ++j)
      kernel.at(i, j) = static_cast<S>(std::exp(-dm.at(i, j) * dm.at(i, j) / two_sigma_sq));
  return kernel;
}

/// Encoder output. query_states is K x d (StructOnly / Fused), text_states is
/// L x d (TextOnly / Fused); row 0 of text_states is the [CLS] state.
template <class S>
struct FusionOut {
  FusionMode mode;
  VarT<S> query_states;
  VarT<S> text_states;
};

/// Distance-biased structure transformer layer: attention logits receive
/// w_h * exp(-d_ij^2 / (2 sigma^2)) per head, and there is no positional
/// encoding, so atom order cannot matter.
template <class S>
struct StructLayerP {
  LnP<S> ln_attn;
  AttnP<S> attn;
  TensorT<S> dist_w;  // 1 x n_heads
  LnP<S> ln_ffn;
  FfnP<S> ffn;

  void init(int d, int heads, Rng& rng) {
    ln_attn.init(d);
    attn.init(d, heads, rng);
    // kernel gate starts at 1 so geometry is visible from step 0
    dist_w = TensorT<S>::full({1, heads}, S(1));
    dist_w.requires_grad = true;
    ln_ffn.init(d);
    ffn.init(d, 4 * d, rng);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    ln_attn.collect(prefix + ".ln_attn", out);
    attn.collect(prefix + ".attn", out);
    out.emplace_back(prefix + ".dist_w", &dist_w);
    ln_ffn.collect(prefix + ".ln_ffn", out);
    ffn.collect(prefix + ".ffn", out);
  }
};

/// One Q-Former layer. Self-attention weights are shared across the query
/// and text branches; feed-forward weights are separate per branch;
/// cross-attention to the atom states exists on even (0-based) layers only.
template <class S>
struct QFormerLayerP {
  bool has_cross = false;
  LnP<S> ln_shared;
  AttnP<S> shared_attn;
  LnP<S> ln_cross;
  AttnP<S> cross_attn;
  LnP<S> ln_ffn_q;
  FfnP<S> ffn_q;
  LnP<S> ln_ffn_t;
  FfnP<S> ffn_t;

  void init(int d, int heads, bool cross, Rng& rng) {
    has_cross = cross;
    ln_shared.init(d);
    shared_attn.init(d, heads, rng);
    if (cross) {
      ln_cross.init(d);
      cross_attn.init(d, heads, rng);
    }
    ln_ffn_q.init(d);
    ffn_q.init(d, 4 * d, rng);
    ln_ffn_t.init(d);
    ffn_t.init(d, 4 * d, rng);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    ln_shared.collect(prefix + ".ln_shared", out);
    shared_attn.collect(prefix + ".shared_attn", out);
    if (has_cross) {
      ln_cross.collect(prefix + ".ln_cross", out);
      cross_attn.collect(prefix + ".cross_attn", out);
    }
    ln_ffn_q.collect(prefix + ".ln_ffn_q", out);
    ffn_q.collect(prefix + ".ffn_q", out);
    ln_ffn_t.collect(prefix + ".ln_ffn_t", out);
    ffn_t.collect(prefix + ".ffn_t", out);
  }
};

/// The view-based molecule encoder: structure transformer producing atom
/// states z^(a), plus a two-branch query transformer over K learned query
/// vectors and/or a token sequence.
template <class S>
struct EncoderT {
  ModelConfig cfg;
  TensorT<S> atom_embed;   // A x d
  std::vector<StructLayerP<S>> slayers;
  LnP<S> struct_ln;
  TensorT<S> query_embed;  // K x d
  TensorT<S> token_embed;  // vocab x d
  TensorT<S> pos_embed;    // max_text_len x d
  std::vector<QFormerLayerP<S>> qlayers;
  LnP<S> final_ln_q;
  LnP<S> final_ln_t;

  void init(const ModelConfig& config, Rng& rng) {
    cfg = config;
    atom_embed = TensorT<S>::randn({cfg.atom_alphabet, cfg.d_model}, rng, 0.02);
    atom_embed.requires_grad = true;
    slayers.resize(static_cast<size_t>(cfg.struct_layers));
    for (auto& layer : slayers) layer.init(cfg.d_model, cfg.n_heads, rng);
    struct_ln.init(cfg.d_model);
    query_embed = TensorT<S>::randn({cfg.n_queries, cfg.d_model}, rng, 0.02);
    query_embed.requires_grad = true;
    token_embed = TensorT<S>::randn({cfg.vocab_size, cfg.d_model}, rng, 0.02);
    token_embed.requires_grad = true;
    pos_embed = TensorT<S>::randn({cfg.max_text_len, cfg.d_model}, rng, 0.02);
    pos_embed.requires_grad = true;
    qlayers.resize(static_cast<size_t>(cfg.qformer_layers));
    for (size_t l = 0; l < qlayers.size(); ++l)
      qlayers[l].init(cfg.d_model, cfg.n_heads, /*cross=*/l % 2 == 0, rng);
    final_ln_q.init(cfg.d_model);
    final_ln_t.init(cfg.d_model);
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    out.emplace_back(prefix + ".atom_embed", &atom_embed);
    for (size_t l = 0; l < slayers.size(); ++l)
      slayers[l].collect(prefix + ".struct" + std::to_string(l), out);
    struct_ln.collect(prefix + ".struct_ln", out);
    out.emplace_back(prefix + ".query_embed", &query_embed);
    out.emplace_back(prefix + ".token_embed", &token_embed);
    out.emplace_back(prefix + ".pos_embed", &pos_embed);
    for (size_t l = 0; l < qlayers.size(); ++l)
      qlayers[l].collect(prefix + ".qf" + std::to_string(l), out);
    final_ln_q.collect(prefix + ".final_ln_q", out);
    final_ln_t.collect(prefix + ".final_ln_t", out);
  }

  /// Atom states z^(a): |V| x d. A pure function of (weights, molecule), so
  /// repeated encodings of one molecule on one tape share the subgraph.
  VarT<S> encode_structure(Ctx<S>& c, const Molecule& m) {
    auto hit = c.memo.find(&m);
    if (hit != c.memo.end()) return VarT<S>{&c.tape, hit->second};
    m.validate();
    require(m.atom_count() <= cfg.max_atoms, ErrorKind::Capacity,
            "molecule '" + m.id + "' exceeds max_atoms");
    for (int a : m.atoms)
      require(a < cfg.atom_alphabet, ErrorKind::Capacity,
              "molecule '" + m.id + "': atom type outside the configured alphabet");
    VarT<S> x = embed_rows(c.use(atom_embed), m.atoms);
    // Gaussian distance kernel, shared by all layers
    TensorT<S> kernel = distance_kernel<S>(distances(m), cfg.gaussian_sigma);
    for (auto& layer : slayers) {
      VarT<S> kv = c.constant(kernel);
      std::vector<VarT<S>> head_bias;
      for (int h = 0; h < cfg.n_heads; ++h)
        head_bias.push_back(scale_by(kv, slice_cols(c.use(layer.dist_w), h, h + 1)));
      VarT<S> normed = layer.ln_attn(c, x);
      x = add(x, layer.attn(c, normed, normed, nullptr, &head_bias));
      x = add(x, layer.ffn(c, layer.ln_ffn(c, x)));
    }
    VarT<S> out = struct_ln(c, x);
    c.memo[&m] = out.id;
    return out;
  }

  FusionOut<S> forward_struct(Ctx<S>& c, const Molecule& m) {
    return run_qformer(c, &m, nullptr, false);
  }

  FusionOut<S> forward_text(Ctx<S>& c, const TokenSequence& t) {
    return run_qformer(c, nullptr, &t, false);
  }

  FusionOut<S> forward_fused(Ctx<S>& c, const Molecule& m, const TokenSequence& t,
                             bool mask_text_keys = false) {
    return run_qformer(c, &m, &t, mask_text_keys);
  }

 private:
  VarT<S> embed_text(Ctx<S>& c, const TokenSequence& t, std::vector<uint8_t>* keep) {
    require(t.length() >= 1, ErrorKind::Validation, "encoder: empty token sequence");
    require(t.length() <= cfg.max_text_len, ErrorKind::Capacity,
            "encoder: sequence of length " + std::to_string(t.length()) + " exceeds max_text_len");
    require(t.starts_with_cls(), ErrorKind::Validation,
            "encoder: text sequences must start with [CLS]");
    for (int id : t.ids)
      require(id >= 0 && id < cfg.vocab_size, ErrorKind::Validation,
              "encoder: token id outside the vocabulary");
    keep->clear();
    for (int id : t.ids) keep->push_back(id == kPad ? 0 : 1);
    return add(embed_rows(c.use(token_embed), t.ids),
               slice_rows(c.use(pos_embed), 0, t.length()));
  }

  /// mask_text_keys removes the text keys from the shared self-attention,
  /// a construction probe under which the fused query path must reproduce
  /// the struct-only path exactly. Not a runtime mode.
  FusionOut<S> run_qformer(Ctx<S>& c, const Molecule* m, const TokenSequence* t,
                           bool mask_text_keys) {
    require(m != nullptr || t != nullptr, ErrorKind::Validation, "encoder: nothing to encode");
    VarT<S> za;
    VarT<S> q;
    VarT<S> txt;
    std::vector<uint8_t> text_keep;
    const int K = cfg.n_queries;
    if (m != nullptr) {
      za = encode_structure(c, *m);
      q = c.use(query_embed);
    }
    if (t != nullptr) txt = embed_text(c, *t, &text_keep);
    const int L = t != nullptr ? t->length() : 0;

    for (auto& layer : qlayers) {
      if (m != nullptr && t != nullptr) {
        // one shared bidirectional self-attention over [queries ; text]
        VarT<S> joint = concat_rows<S>({q, txt});
        std::vector<uint8_t> keys(static_cast<size_t>(K + L), 1);
        for (int j = 0; j < L; ++j)
          keys[static_cast<size_t>(K + j)] = mask_text_keys ? 0 : text_keep[static_cast<size_t>(j)];
        std::vector<uint8_t> mask = broadcast_key_mask(K + L, keys);
        VarT<S> normed = layer.ln_shared(c, joint);
        joint = add(joint, layer.shared_attn(c, normed, normed, &mask));
        q = slice_rows(joint, 0, K);
        txt = slice_rows(joint, K, K + L);
      } else if (m != nullptr) {
        VarT<S> normed = layer.ln_shared(c, q);
        q = add(q, layer.shared_attn(c, normed, normed));
      } else {
        std::vector<uint8_t> mask = broadcast_key_mask(L, text_keep);
        VarT<S> normed = layer.ln_shared(c, txt);
        txt = add(txt, layer.shared_attn(c, normed, normed, &mask));
      }
      if (m != nullptr && layer.has_cross)
        q = add(q, layer.cross_attn(c, layer.ln_cross(c, q), za));
      if (m != nullptr) q = add(q, layer.ffn_q(c, layer.ln_ffn_q(c, q)));
      if (t != nullptr) txt = add(txt, layer.ffn_t(c, layer.ln_ffn_t(c, txt)));
    }

    FusionOut<S> out;
    if (m != nullptr && t != nullptr)
      out.mode = FusionMode::Fused;
    else if (m != nullptr)
      out.mode = FusionMode::StructOnly;
    else
      out.mode = FusionMode::TextOnly;
    if (m != nullptr) out.query_states = final_ln_q(c, q);
    if (t != nullptr) out.text_states = final_ln_t(c, txt);
    return out;
  }
};

}  // namespace mvmol
