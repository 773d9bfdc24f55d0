#pragma once

#include "mvmol/decoder.hpp"
#include "mvmol/encoder.hpp"

namespace mvmol {

/// The full model: view-based encoder, text decoder, projection head
/// (fully-connected + l2 normalization), matching head (average pooling +
/// fully-connected, 2 logits) and the property head (max pooling + two
/// fully-connected layers with ReLU). The matching head is shared between
/// the stage-1 and stage-2 matching losses.
template <class S>
struct ModelT {
  ModelConfig cfg;
  EncoderT<S> encoder;
  DecoderT<S> decoder;
  LinearP<S> proj;      // d -> d_proj
  LinearP<S> match;     // d -> 2
  LinearP<S> prop_fc1;  // d -> d
  LinearP<S> prop_fc2;  // d -> 2

  void init(const ModelConfig& config, uint64_t seed) {
    config.validate();
    cfg = config;
    Rng rng = Rng(seed).split(0xC0DE);
    encoder.init(cfg, rng);
    decoder.init(cfg, rng);
    proj.init(cfg.d_model, cfg.d_proj, rng);
    match.init(cfg.d_model, 2, rng);
    prop_fc1.init(cfg.d_model, cfg.d_model, rng);
    prop_fc2.init(cfg.d_model, 2, rng);
  }

  NamedParamsT<S> named_params() {
    NamedParamsT<S> out;
    encoder.collect("encoder", out);
    decoder.collect("decoder", out);
    proj.collect("proj", out);
    match.collect("match", out);
    prop_fc1.collect("prop_fc1", out);
    prop_fc2.collect("prop_fc2", out);
    return out;
  }

  void zero_grads() {
    for (auto& [name, p] : named_params()) p->zero_grad();
  }

  /// f_proj: rows projected then scaled to unit norm.
  VarT<S> project(Ctx<S>& c, VarT<S> states) { return l2_normalize_rows(proj(c, states)); }

  /// f_cmm: average pooling over the provided rows, then 2 match logits
  /// (index 1 = match).
  VarT<S> match_logits(Ctx<S>& c, VarT<S> states) { return match(c, mean_rows(states)); }

  /// Property head over query states: max pooling then two fully-connected
  /// layers with ReLU, 2 logits (index 1 = positive).
  VarT<S> property_logits(Ctx<S>& c, VarT<S> query_states) {
    return prop_fc2(c, relu(prop_fc1(c, colwise_max(query_states))));
  }

  template <class S2>
  ModelT<S2> cast() const {
    ModelT<S2> out;
    ModelT<S>& self = const_cast<ModelT<S>&>(*this);
    out.init(cfg, 0);
    NamedParamsT<S2> dst = out.named_params();
    NamedParamsT<S> src = self.named_params();
    require(dst.size() == src.size(), ErrorKind::Shape, "model cast: parameter lists differ");
    for (size_t i = 0; i < src.size(); ++i) {
      require(dst[i].first == src[i].first, ErrorKind::Shape, "model cast: name mismatch");
      *dst[i].second = src[i].second->template cast<S2>();
      dst[i].second->requires_grad = true;
    }
    return out;
  }
};

using Model = ModelT<float>;
using ModelD = ModelT<double>;

}  // namespace mvmol
