#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mvmol/autodiff.hpp"
#include "mvmol/rng.hpp"

namespace mvmol {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

template <class S>
using NamedParamsT = std::vector<std::pair<std::string, TensorT<S>*>>;

/// Per-forward context: one tape plus leaf caching, so a parameter consumed
/// twice maps to a single tape node and its gradient contributions add up.
/// substitute() lets gradient checks route one parameter through an external
/// leaf var.
template <class S>
struct Ctx {
  TapeT<S>& tape;
  std::unordered_map<const TensorT<S>*, int> leaf_ids;
  // per-tape memo for pure derived encodings (atom states keyed by molecule)
  std::unordered_map<const void*, int> memo;

  explicit Ctx(TapeT<S>& t) : tape(t) {}

  VarT<S> use(TensorT<S>& t) {
    auto it = leaf_ids.find(&t);
    if (it != leaf_ids.end()) return VarT<S>{&tape, it->second};
    VarT<S> v = tape.leaf(t);
    leaf_ids[&t] = v.id;
    return v;
  }

  VarT<S> constant(TensorT<S> v) { return tape.constant(std::move(v)); }

  void substitute(const TensorT<S>& t, VarT<S> v) { leaf_ids[&t] = v.id; }
};

template <class S>
struct LinearP {
  TensorT<S> w;  // in x out
  TensorT<S> b;  // 1 x out

  void init(int in, int out, Rng& rng, double std_dev = 0.02) {
    w = TensorT<S>::randn({in, out}, rng, std_dev);
    b = TensorT<S>::zeros({1, out});
    w.requires_grad = b.requires_grad = true;
  }

  VarT<S> operator()(Ctx<S>& c, VarT<S> x) {
    return add_rowvec(matmul(x, c.use(w)), c.use(b));
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    out.emplace_back(prefix + ".w", &w);
    out.emplace_back(prefix + ".b", &b);
  }
};

template <class S>
struct LnP {
  TensorT<S> gain, bias;  // 1 x d

  void init(int d) {
    gain = TensorT<S>::full({1, d}, S(1));
    bias = TensorT<S>::zeros({1, d});
    gain.requires_grad = bias.requires_grad = true;
  }

  VarT<S> operator()(Ctx<S>& c, VarT<S> x) {
    return layer_norm(x, c.use(gain), c.use(bias));
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

/// Multi-head attention. Heads are column slices of the shared projections;
/// `full_mask` (queries x keys, 1 = attend) and `head_bias` (per-head additive
/// logit matrices) are both optional.
template <class S>
struct AttnP {
  LinearP<S> wq, wk, wv, wo;
  int n_heads = 1;
  int d_model = 0;

  void init(int d, int heads, Rng& rng) {
    require(d % heads == 0, ErrorKind::Config, "attention: d_model must divide by n_heads");
    d_model = d;
    n_heads = heads;
    wq.init(d, d, rng);
    wk.init(d, d, rng);
    wv.init(d, d, rng);
    wo.init(d, d, rng);
  }

  VarT<S> operator()(Ctx<S>& c, VarT<S> queries_in, VarT<S> kv_in,
                     const std::vector<uint8_t>* full_mask = nullptr,
                     const std::vector<VarT<S>>* head_bias = nullptr) {
    const int hd = d_model / n_heads;
    VarT<S> q = wq(c, queries_in);
    VarT<S> k = wk(c, kv_in);
    VarT<S> v = wv(c, kv_in);
    std::vector<VarT<S>> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      VarT<S> qh = slice_cols(q, h * hd, (h + 1) * hd);
      VarT<S> kh = slice_cols(k, h * hd, (h + 1) * hd);
      VarT<S> vh = slice_cols(v, h * hd, (h + 1) * hd);
      VarT<S> logits = div_const(matmul(qh, transpose(kh)), static_cast<S>(std::sqrt(double(hd))));
      if (head_bias != nullptr) logits = add(logits, (*head_bias)[static_cast<size_t>(h)]);
      VarT<S> attn = softmax_rows(logits, full_mask);
      heads.push_back(matmul(attn, vh));
    }
    return wo(c, concat_cols(heads));
  }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
  }
};

template <class S>
struct FfnP {
  LinearP<S> fc1, fc2;

  void init(int d, int hidden, Rng& rng) {
    fc1.init(d, hidden, rng);
    fc2.init(hidden, d, rng);
  }

  VarT<S> operator()(Ctx<S>& c, VarT<S> x) { return fc2(c, gelu(fc1(c, x))); }

  void collect(const std::string& prefix, NamedParamsT<S>& out) {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

/// queries x keys mask broadcast from a per-key keep vector.
inline std::vector<uint8_t> broadcast_key_mask(int n_queries, const std::vector<uint8_t>& keys) {
  std::vector<uint8_t> mask(static_cast<size_t>(n_queries) * keys.size());
  for (int i = 0; i < n_queries; ++i)
    for (size_t j = 0; j < keys.size(); ++j) mask[static_cast<size_t>(i) * keys.size() + j] = keys[j];
  return mask;
}

inline std::vector<uint8_t> causal_mask(int n) {
  std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) mask[static_cast<size_t>(i) * n + j] = 1;
  return mask;
}

}  // namespace mvmol
