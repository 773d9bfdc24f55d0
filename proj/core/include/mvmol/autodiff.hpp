#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mvmol/error.hpp"
#include "mvmol/tensor.hpp"

namespace mvmol {

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order by construction; backward() walks it once in reverse.
/// Values are stored per node; gradients live in per-pass buffers and are
/// flushed into the `grad` field of requires_grad leaves at the end of the
/// pass, so repeated backward calls accumulate leaf gradients.
///
/// One tape per forward invocation; tapes are never shared across threads.
template <class S>
class TapeT;

template <class S>
struct VarT {
  TapeT<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorT<S>& val() const { return tape->val(*this); }
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }
};

using Var = VarT<float>;
using VarD = VarT<double>;

template <class S>
class TapeT {
 public:
  using BackFn = std::function<void(TapeT&, int)>;

  struct Node {
    TensorT<S> value;
    std::vector<S> gbuf;  // pass-local gradient, same layout as value.data
    std::vector<int> inputs;
    BackFn backward;
    bool needs_grad = false;
    TensorT<S>* sink = nullptr;  // leaf: external tensor whose grad we feed
  };

  explicit TapeT(bool finite_checks = false) : finite_checks_(finite_checks) {}

  /// Leaf backed by an external tensor. If t.requires_grad, backward()
  /// accumulates into t.grad. The tensor must outlive the tape.
  VarT<S> leaf(TensorT<S>& t) {
    Node n;
    n.value = t;  // copy; the tape owns its values
    n.needs_grad = t.requires_grad;
    n.sink = t.requires_grad ? &t : nullptr;
    return push(std::move(n), "leaf");
  }

  /// Constant input, never differentiated.
  VarT<S> constant(TensorT<S> v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n), "constant");
  }

  VarT<S> make(TensorT<S> v, std::vector<int> inputs, BackFn bw, const char* opname) {
    Node n;
    n.value = std::move(v);
    n.inputs = std::move(inputs);
    for (int i : n.inputs)
      if (nodes_[i].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backward = std::move(bw);
    return push(std::move(n), opname);
  }

  const TensorT<S>& val(VarT<S> v) const { return nodes_[v.id].value; }
  const Node& node(int id) const { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }
  bool finite_checks() const { return finite_checks_; }

  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Pass-local gradient buffer of a node, allocated on first touch.
  /// Returns nullptr when the node does not participate in differentiation,
  /// letting backward rules skip dead branches uniformly.
  S* grad_ptr(int id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (n.gbuf.size() != n.value.data.size()) n.gbuf.assign(n.value.data.size(), S(0));
    return n.gbuf.data();
  }

  const std::vector<S>& gbuf(int id) const { return nodes_[id].gbuf; }

  /// Reverse sweep from a scalar loss. Leaf gradients are added into their
  /// backing tensors, so calling twice doubles them.
  void backward(VarT<S> loss) {
    require(loss.tape == this, ErrorKind::Value, "backward: var from another tape");
    require(nodes_[loss.id].value.numel() == 1, ErrorKind::Shape,
            "backward: loss must be a scalar");
    for (Node& n : nodes_) n.gbuf.clear();
    S* g = grad_ptr(loss.id);
    if (g == nullptr) return;  // loss independent of any trainable leaf
    g[0] = S(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.gbuf.empty()) continue;
      if (n.backward) n.backward(*this, id);
    }
    for (Node& n : nodes_) {
      if (n.sink != nullptr && !n.gbuf.empty()) {
        n.sink->ensure_grad();
        for (size_t i = 0; i < n.gbuf.size(); ++i) n.sink->grad[i] += n.gbuf[i];
      }
    }
  }

 private:
  VarT<S> push(Node&& n, const char* opname) {
    if (finite_checks_ && !n.value.all_finite())
      fail(ErrorKind::Value, std::string("non-finite values produced by op '") + opname + "'");
    nodes_.push_back(std::move(n));
    return VarT<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool finite_checks_ = false;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

// ---------------------------------------------------------------------------
// Ops. All tensors on the tape are rank-2; scalars are 1x1. Inner products
// and other reductions accumulate in double regardless of S.
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void check_rank2(const TensorT<S>& t, const char* op) {
  require(t.rank() == 2, ErrorKind::Shape, std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

// C = A * B with double accumulation, row-major ikj order.
template <class S>
TensorT<S> matmul_value(const TensorT<S>& a, const TensorT<S>& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<S> out = TensorT<S>::zeros({m, n});
  std::vector<double> acc(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const S* arow = &a.data[static_cast<size_t>(i) * k];
    for (int kk = 0; kk < k; ++kk) {
      const double av = static_cast<double>(arow[kk]);
      const S* brow = &b.data[static_cast<size_t>(kk) * n];
      for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    S* orow = &out.data[static_cast<size_t>(i) * n];
    for (int j = 0; j < n; ++j) orow[j] = static_cast<S>(acc[j]);
  }
  return out;
}

}  // namespace detail

template <class S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  const TensorT<S>& av = a.val();
  const TensorT<S>& bv = b.val();
  detail::check_rank2(av, "matmul");
  detail::check_rank2(bv, "matmul");
  require(av.cols() == bv.rows(), ErrorKind::Shape,
          "matmul: inner dimensions disagree " + av.shape_str() + " x " + bv.shape_str());
  TensorT<S> out = detail::matmul_value(av, bv);
  return a.tape->make(
      std::move(out), {a.id, b.id},
      [aid = a.id, bid = b.id](TapeT<S>& t, int self) {
        const TensorT<S>& A = t.node(aid).value;
        const TensorT<S>& B = t.node(bid).value;
        const std::vector<S>& G = t.gbuf(self);
        const int m = A.rows(), k = A.cols(), n = B.cols();
        if (S* da = t.grad_ptr(aid)) {
          // dA[i][kk] += sum_j G[i][j] * B[kk][j]
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              const S* grow = &G[static_cast<size_t>(i) * n];
              const S* brow = &B.data[static_cast<size_t>(kk) * n];
              for (int j = 0; j < n; ++j) acc += static_cast<double>(grow[j]) * static_cast<double>(brow[j]);
              da[static_cast<size_t>(i) * k + kk] += static_cast<S>(acc);
            }
        }
        if (S* db = t.grad_ptr(bid)) {
          // dB[kk][j] += sum_i A[i][kk] * G[i][j]
          for (int i = 0; i < m; ++i) {
            const S* arow = &A.data[static_cast<size_t>(i) * k];
            const S* grow = &G[static_cast<size_t>(i) * n];
            for (int kk = 0; kk < k; ++kk) {
              const S av2 = arow[kk];
              S* drow = &db[static_cast<size_t>(kk) * n];
              for (int j = 0; j < n; ++j) drow[j] += av2 * grow[j];
            }
          }
        }
      },
      "matmul");
}

template <class S>
VarT<S> transpose(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "transpose");
  const int m = xv.rows(), n = xv.cols();
  TensorT<S> out = TensorT<S>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, m, n](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dx[static_cast<size_t>(i) * n + j] += G[static_cast<size_t>(j) * m + i];
        }
      },
      "transpose");
}

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  const TensorT<S>& av = a.val();
  const TensorT<S>& bv = b.val();
  require(av.same_shape(bv), ErrorKind::Shape,
          "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  TensorT<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  return a.tape->make(
      std::move(out), {a.id, b.id},
      [aid = a.id, bid = b.id](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        if (S* da = t.grad_ptr(aid))
          for (size_t i = 0; i < G.size(); ++i) da[i] += G[i];
        if (S* db = t.grad_ptr(bid))
          for (size_t i = 0; i < G.size(); ++i) db[i] += G[i];
      },
      "add");
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  const TensorT<S>& av = a.val();
  const TensorT<S>& bv = b.val();
  require(av.same_shape(bv), ErrorKind::Shape, "sub: shape mismatch");
  TensorT<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  return a.tape->make(
      std::move(out), {a.id, b.id},
      [aid = a.id, bid = b.id](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        if (S* da = t.grad_ptr(aid))
          for (size_t i = 0; i < G.size(); ++i) da[i] += G[i];
        if (S* db = t.grad_ptr(bid))
          for (size_t i = 0; i < G.size(); ++i) db[i] -= G[i];
      },
      "sub");
}

template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
  const TensorT<S>& av = a.val();
  const TensorT<S>& bv = b.val();
  require(av.same_shape(bv), ErrorKind::Shape, "mul: shape mismatch");
  TensorT<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  return a.tape->make(
      std::move(out), {a.id, b.id},
      [aid = a.id, bid = b.id](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        const TensorT<S>& A = t.node(aid).value;
        const TensorT<S>& B = t.node(bid).value;
        if (S* da = t.grad_ptr(aid))
          for (size_t i = 0; i < G.size(); ++i) da[i] += G[i] * B.data[i];
        if (S* db = t.grad_ptr(bid))
          for (size_t i = 0; i < G.size(); ++i) db[i] += G[i] * A.data[i];
      },
      "mul");
}

template <class S>
VarT<S> scale(VarT<S> x, S c) {
  TensorT<S> out = x.val();
  for (auto& v : out.data) v *= c;
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, c](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (size_t i = 0; i < G.size(); ++i) dx[i] += G[i] * c;
        }
      },
      "scale");
}

/// Elementwise division by a constant. Kept as a true division so that
/// dividing by 1 is a bitwise no-op (the temperature-rescaling identity).
template <class S>
VarT<S> div_const(VarT<S> x, S c) {
  require(c != S(0), ErrorKind::Value, "div_const: zero divisor");
  TensorT<S> out = x.val();
  for (auto& v : out.data) v /= c;
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, c](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (size_t i = 0; i < G.size(); ++i) dx[i] += G[i] / c;
        }
      },
      "div_const");
}

/// x * s where s is a 1x1 var (per-head distance-bias weights and similar).
template <class S>
VarT<S> scale_by(VarT<S> x, VarT<S> s) {
  require(s.val().numel() == 1, ErrorKind::Shape, "scale_by: scalar var expected");
  const S sv = s.val().data[0];
  TensorT<S> out = x.val();
  for (auto& v : out.data) v *= sv;
  return x.tape->make(
      std::move(out), {x.id, s.id},
      [xid = x.id, sid = s.id, sv](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        const TensorT<S>& X = t.node(xid).value;
        if (S* dx = t.grad_ptr(xid))
          for (size_t i = 0; i < G.size(); ++i) dx[i] += G[i] * sv;
        if (S* ds = t.grad_ptr(sid)) {
          double acc = 0.0;
          for (size_t i = 0; i < G.size(); ++i)
            acc += static_cast<double>(G[i]) * static_cast<double>(X.data[i]);
          ds[0] += static_cast<S>(acc);
        }
      },
      "scale_by");
}

/// x + b with b broadcast over rows; b is 1 x d.
template <class S>
VarT<S> add_rowvec(VarT<S> x, VarT<S> b) {
  const TensorT<S>& xv = x.val();
  const TensorT<S>& bv = b.val();
  detail::check_rank2(xv, "add_rowvec");
  require(bv.rows() == 1 && bv.cols() == xv.cols(), ErrorKind::Shape,
          "add_rowvec: bias shape " + bv.shape_str() + " vs " + xv.shape_str());
  TensorT<S> out = xv;
  const int m = xv.rows(), n = xv.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += bv.at(0, j);
  return x.tape->make(
      std::move(out), {x.id, b.id},
      [xid = x.id, bid = b.id, m, n](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        if (S* dx = t.grad_ptr(xid))
          for (size_t i = 0; i < G.size(); ++i) dx[i] += G[i];
        if (S* db = t.grad_ptr(bid)) {
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += static_cast<double>(G[static_cast<size_t>(i) * n + j]);
            db[j] += static_cast<S>(acc);
          }
        }
      },
      "add_rowvec");
}

/// Gather rows of an embedding table: out[i] = table[ids[i]].
template <class S>
VarT<S> embed_rows(VarT<S> table, const std::vector<int>& ids) {
  const TensorT<S>& tv = table.val();
  detail::check_rank2(tv, "embed_rows");
  const int n = tv.rows(), d = tv.cols();
  TensorT<S> out = TensorT<S>::zeros({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < n, ErrorKind::Shape, "embed_rows: id out of range");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = tv.at(ids[i], j);
  }
  return table.tape->make(
      std::move(out), {table.id},
      [tid = table.id, ids, d](TapeT<S>& t, int self) {
        if (S* dt = t.grad_ptr(tid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j)
              dt[static_cast<size_t>(ids[i]) * d + j] += G[i * d + j];
        }
      },
      "embed_rows");
}

template <class S>
VarT<S> concat_rows(const std::vector<VarT<S>>& parts) {
  require(!parts.empty(), ErrorKind::Shape, "concat_rows: empty input");
  TapeT<S>* tape = parts[0].tape;
  const int n = parts[0].val().cols();
  int m = 0;
  std::vector<int> ids;
  std::vector<int> row_of;  // start row per part
  for (const auto& p : parts) {
    detail::check_rank2(p.val(), "concat_rows");
    require(p.val().cols() == n, ErrorKind::Shape, "concat_rows: column mismatch");
    row_of.push_back(m);
    m += p.val().rows();
    ids.push_back(p.id);
  }
  TensorT<S> out = TensorT<S>::zeros({m, n});
  for (size_t p = 0; p < parts.size(); ++p) {
    const TensorT<S>& v = parts[p].val();
    std::copy(v.data.begin(), v.data.end(),
              out.data.begin() + static_cast<size_t>(row_of[p]) * n);
  }
  return tape->make(
      std::move(out), ids,
      [ids, row_of, n](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        for (size_t p = 0; p < ids.size(); ++p) {
          if (S* dp = t.grad_ptr(ids[p])) {
            const size_t count = t.node(ids[p]).value.data.size();
            const size_t off = static_cast<size_t>(row_of[p]) * n;
            for (size_t i = 0; i < count; ++i) dp[i] += G[off + i];
          }
        }
      },
      "concat_rows");
}

template <class S>
VarT<S> concat_cols(const std::vector<VarT<S>>& parts) {
  require(!parts.empty(), ErrorKind::Shape, "concat_cols: empty input");
  TapeT<S>* tape = parts[0].tape;
  const int m = parts[0].val().rows();
  int n = 0;
  std::vector<int> ids, col_of, widths;
  for (const auto& p : parts) {
    detail::check_rank2(p.val(), "concat_cols");
    require(p.val().rows() == m, ErrorKind::Shape, "concat_cols: row mismatch");
    col_of.push_back(n);
    widths.push_back(p.val().cols());
    n += p.val().cols();
    ids.push_back(p.id);
  }
  TensorT<S> out = TensorT<S>::zeros({m, n});
  for (size_t p = 0; p < parts.size(); ++p) {
    const TensorT<S>& v = parts[p].val();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < widths[p]; ++j) out.at(i, col_of[p] + j) = v.at(i, j);
  }
  return tape->make(
      std::move(out), ids,
      [ids, col_of, widths, m, n](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        for (size_t p = 0; p < ids.size(); ++p) {
          if (S* dp = t.grad_ptr(ids[p])) {
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < widths[p]; ++j)
                dp[static_cast<size_t>(i) * widths[p] + j] +=
                    G[static_cast<size_t>(i) * n + col_of[p] + j];
          }
        }
      },
      "concat_cols");
}

template <class S>
VarT<S> slice_rows(VarT<S> x, int r0, int r1) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "slice_rows");
  require(0 <= r0 && r0 < r1 && r1 <= xv.rows(), ErrorKind::Shape, "slice_rows: bad range");
  const int n = xv.cols();
  TensorT<S> out = TensorT<S>::zeros({r1 - r0, n});
  std::copy(xv.data.begin() + static_cast<size_t>(r0) * n,
            xv.data.begin() + static_cast<size_t>(r1) * n, out.data.begin());
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, r0, n](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          const size_t off = static_cast<size_t>(r0) * n;
          for (size_t i = 0; i < G.size(); ++i) dx[off + i] += G[i];
        }
      },
      "slice_rows");
}

template <class S>
VarT<S> slice_cols(VarT<S> x, int c0, int c1) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "slice_cols");
  require(0 <= c0 && c0 < c1 && c1 <= xv.cols(), ErrorKind::Shape, "slice_cols: bad range");
  const int m = xv.rows(), n = xv.cols(), w = c1 - c0;
  TensorT<S> out = TensorT<S>::zeros({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = xv.at(i, c0 + j);
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, c0, m, n, w](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              dx[static_cast<size_t>(i) * n + c0 + j] += G[static_cast<size_t>(i) * w + j];
        }
      },
      "slice_cols");
}

/// Row-wise softmax with an optional boolean key mask (1 = keep). Masked
/// entries are exactly zero in the output. A fully masked row is an error.
template <class S>
VarT<S> softmax_rows(VarT<S> x, const std::vector<uint8_t>* mask = nullptr) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "softmax_rows");
  const int m = xv.rows(), n = xv.cols();
  if (mask != nullptr)
    require(static_cast<int>(mask->size()) == m * n, ErrorKind::Shape,
            "softmax_rows: mask size mismatch");
  TensorT<S> out = TensorT<S>::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (mask && !(*mask)[static_cast<size_t>(i) * n + j]) continue;
      mx = std::max(mx, static_cast<double>(xv.at(i, j)));
    }
    require(std::isfinite(mx), ErrorKind::Value, "softmax_rows: fully masked row " + std::to_string(i));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mask && !(*mask)[static_cast<size_t>(i) * n + j]) continue;
      denom += std::exp(static_cast<double>(xv.at(i, j)) - mx);
    }
    for (int j = 0; j < n; ++j) {
      if (mask && !(*mask)[static_cast<size_t>(i) * n + j]) {
        out.at(i, j) = S(0);
        continue;
      }
      out.at(i, j) = static_cast<S>(std::exp(static_cast<double>(xv.at(i, j)) - mx) / denom);
    }
  }
  if (x.tape->finite_checks()) {
    // row-stochastic sanity, part of the debug-mode attention contract
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += static_cast<double>(out.at(i, j));
      require(std::fabs(s - 1.0) < 1e-4, ErrorKind::Value, "softmax_rows: row does not sum to 1");
    }
  }
  std::vector<uint8_t> mask_copy = mask ? *mask : std::vector<uint8_t>();
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, m, n, mask_copy](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          const TensorT<S>& Y = t.node(self).value;
          for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j)
              dot += static_cast<double>(G[static_cast<size_t>(i) * n + j]) *
                     static_cast<double>(Y.at(i, j));
            for (int j = 0; j < n; ++j) {
              if (!mask_copy.empty() && !mask_copy[static_cast<size_t>(i) * n + j]) continue;
              dx[static_cast<size_t>(i) * n + j] +=
                  static_cast<S>((static_cast<double>(G[static_cast<size_t>(i) * n + j]) - dot) *
                                 static_cast<double>(Y.at(i, j)));
            }
          }
        }
      },
      "softmax_rows");
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row normalization then affine: y = gain * (x - mean) / sqrt(var + eps) + bias.
/// gain and bias are 1 x d.
template <class S>
VarT<S> layer_norm(VarT<S> x, VarT<S> gain, VarT<S> bias) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "layer_norm");
  const int m = xv.rows(), d = xv.cols();
  require(gain.val().rows() == 1 && gain.val().cols() == d, ErrorKind::Shape, "layer_norm: gain shape");
  require(bias.val().rows() == 1 && bias.val().cols() == d, ErrorKind::Shape, "layer_norm: bias shape");
  TensorT<S> out = TensorT<S>::zeros({m, d});
  std::vector<double> inv_sigma(static_cast<size_t>(m));
  TensorT<S> xhat = TensorT<S>::zeros({m, d});
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += static_cast<double>(xv.at(i, j));
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = static_cast<double>(xv.at(i, j)) - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (static_cast<double>(xv.at(i, j)) - mean) * is;
      xhat.at(i, j) = static_cast<S>(h);
      out.at(i, j) = static_cast<S>(h * static_cast<double>(gain.val().at(0, j)) +
                                    static_cast<double>(bias.val().at(0, j)));
    }
  }
  return x.tape->make(
      std::move(out), {x.id, gain.id, bias.id},
      [xid = x.id, gid = gain.id, bid = bias.id, m, d, inv_sigma, xhat](TapeT<S>& t, int self) {
        const std::vector<S>& G = t.gbuf(self);
        const TensorT<S>& gn = t.node(gid).value;
        if (S* dg = t.grad_ptr(gid)) {
          for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += static_cast<double>(G[static_cast<size_t>(i) * d + j]) *
                     static_cast<double>(xhat.at(i, j));
            dg[j] += static_cast<S>(acc);
          }
        }
        if (S* db = t.grad_ptr(bid)) {
          for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += static_cast<double>(G[static_cast<size_t>(i) * d + j]);
            db[j] += static_cast<S>(acc);
          }
        }
        if (S* dx = t.grad_ptr(xid)) {
          for (int i = 0; i < m; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            std::vector<double> dh(static_cast<size_t>(d));
            for (int j = 0; j < d; ++j) {
              dh[static_cast<size_t>(j)] = static_cast<double>(G[static_cast<size_t>(i) * d + j]) *
                                           static_cast<double>(gn.at(0, j));
              mean_dh += dh[static_cast<size_t>(j)];
              mean_dh_h += dh[static_cast<size_t>(j)] * static_cast<double>(xhat.at(i, j));
            }
            mean_dh /= d;
            mean_dh_h /= d;
            for (int j = 0; j < d; ++j) {
              const double h = static_cast<double>(xhat.at(i, j));
              dx[static_cast<size_t>(i) * d + j] += static_cast<S>(
                  inv_sigma[static_cast<size_t>(i)] * (dh[static_cast<size_t>(j)] - mean_dh - h * mean_dh_h));
            }
          }
        }
      },
      "layer_norm");
}

/// Each row scaled to unit Euclidean norm. Near-zero rows are an error.
template <class S>
VarT<S> l2_normalize_rows(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "l2_normalize");
  const int m = xv.rows(), d = xv.cols();
  TensorT<S> out = TensorT<S>::zeros({m, d});
  std::vector<double> inv_norm(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = static_cast<double>(xv.at(i, j));
      s += v * v;
    }
    const double norm = std::sqrt(s);
    require(norm > 1e-12, ErrorKind::Value, "l2_normalize: near-zero vector at row " + std::to_string(i));
    inv_norm[static_cast<size_t>(i)] = 1.0 / norm;
    for (int j = 0; j < d; ++j)
      out.at(i, j) = static_cast<S>(static_cast<double>(xv.at(i, j)) / norm);
  }
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, m, d, inv_norm](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          const TensorT<S>& Y = t.node(self).value;
          for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j)
              dot += static_cast<double>(G[static_cast<size_t>(i) * d + j]) *
                     static_cast<double>(Y.at(i, j));
            for (int j = 0; j < d; ++j)
              dx[static_cast<size_t>(i) * d + j] += static_cast<S>(
                  (static_cast<double>(G[static_cast<size_t>(i) * d + j]) -
                   dot * static_cast<double>(Y.at(i, j))) *
                  inv_norm[static_cast<size_t>(i)]);
          }
        }
      },
      "l2_normalize");
}

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC = 0.044715;

template <class S>
VarT<S> gelu(VarT<S> x) {
  TensorT<S> out = x.val();
  for (auto& v : out.data) {
    const double xd = static_cast<double>(v);
    v = static_cast<S>(0.5 * xd * (1.0 + std::tanh(kGeluK * (xd + kGeluC * xd * xd * xd))));
  }
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          const TensorT<S>& X = t.node(xid).value;
          for (size_t i = 0; i < G.size(); ++i) {
            const double xd = static_cast<double>(X.data[i]);
            const double u = kGeluK * (xd + kGeluC * xd * xd * xd);
            const double th = std::tanh(u);
            const double sech2 = 1.0 - th * th;
            const double dudx = kGeluK * (1.0 + 3.0 * kGeluC * xd * xd);
            dx[i] += static_cast<S>(static_cast<double>(G[i]) *
                                    (0.5 * (1.0 + th) + 0.5 * xd * sech2 * dudx));
          }
        }
      },
      "gelu");
}

template <class S>
VarT<S> relu(VarT<S> x) {
  TensorT<S> out = x.val();
  for (auto& v : out.data) v = v > S(0) ? v : S(0);
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          const TensorT<S>& X = t.node(xid).value;
          for (size_t i = 0; i < G.size(); ++i)
            if (X.data[i] > S(0)) dx[i] += G[i];
        }
      },
      "relu");
}

inline constexpr int kNoIgnoreIndex = -1000000;

/// Mean negative log-softmax probability of the target class over rows whose
/// target is not ignore_index. Log-sum-exp is stabilized and accumulated in
/// double.
template <class S>
VarT<S> cross_entropy(VarT<S> logits, const std::vector<int>& targets,
                      int ignore_index = kNoIgnoreIndex) {
  const TensorT<S>& lv = logits.val();
  detail::check_rank2(lv, "cross_entropy");
  const int m = lv.rows(), c = lv.cols();
  require(static_cast<int>(targets.size()) == m, ErrorKind::Shape,
          "cross_entropy: one target per row expected");
  int valid = 0;
  double total = 0.0;
  std::vector<double> lse(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    if (targets[i] == ignore_index) continue;
    require(targets[i] >= 0 && targets[i] < c, ErrorKind::Value,
            "cross_entropy: target out of range at row " + std::to_string(i));
    double rowmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) rowmax = std::max(rowmax, static_cast<double>(lv.at(i, j)));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(lv.at(i, j)) - rowmax);
    lse[static_cast<size_t>(i)] = rowmax + std::log(denom);
    total += lse[static_cast<size_t>(i)] - static_cast<double>(lv.at(i, targets[i]));
    ++valid;
  }
  require(valid > 0, ErrorKind::Value, "cross_entropy: every row ignored");
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / valid));
  return logits.tape->make(
      std::move(out), {logits.id},
      [lid = logits.id, targets, ignore_index, m, c, valid, lse](TapeT<S>& t, int self) {
        if (S* dl = t.grad_ptr(lid)) {
          const S g = t.gbuf(self)[0];
          const TensorT<S>& L = t.node(lid).value;
          for (int i = 0; i < m; ++i) {
            if (targets[i] == ignore_index) continue;
            for (int j = 0; j < c; ++j) {
              const double p = std::exp(static_cast<double>(L.at(i, j)) - lse[static_cast<size_t>(i)]);
              const double delta = (j == targets[i]) ? 1.0 : 0.0;
              dl[static_cast<size_t>(i) * c + j] +=
                  static_cast<S>(static_cast<double>(g) * (p - delta) / valid);
            }
          }
        }
      },
      "cross_entropy");
}

/// Column-wise max over rows: [m x n] -> [1 x n]. Gradient goes to the first
/// argmax of each column. Doubles as the max-pool of the prediction heads and
/// the max-over-queries of the similarity convention.
template <class S>
VarT<S> colwise_max(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "colwise_max");
  const int m = xv.rows(), n = xv.cols();
  TensorT<S> out = TensorT<S>::zeros({1, n});
  std::vector<int> arg(static_cast<size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    S best = xv.at(0, j);
    int bi = 0;
    for (int i = 1; i < m; ++i)
      if (xv.at(i, j) > best) {
        best = xv.at(i, j);
        bi = i;
      }
    out.at(0, j) = best;
    arg[static_cast<size_t>(j)] = bi;
  }
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, n, arg](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (int j = 0; j < n; ++j)
            dx[static_cast<size_t>(arg[static_cast<size_t>(j)]) * n + j] += G[static_cast<size_t>(j)];
        }
      },
      "colwise_max");
}

/// Mean over rows: [m x n] -> [1 x n].
template <class S>
VarT<S> mean_rows(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  detail::check_rank2(xv, "mean_rows");
  const int m = xv.rows(), n = xv.cols();
  TensorT<S> out = TensorT<S>::zeros({1, n});
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += static_cast<double>(xv.at(i, j));
    out.at(0, j) = static_cast<S>(acc / m);
  }
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, m, n](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const std::vector<S>& G = t.gbuf(self);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              dx[static_cast<size_t>(i) * n + j] += G[static_cast<size_t>(j)] / static_cast<S>(m);
        }
      },
      "mean_rows");
}

template <class S>
VarT<S> reduce_max_all(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  require(xv.numel() > 0, ErrorKind::Shape, "reduce_max_all: empty tensor");
  size_t arg = 0;
  for (size_t i = 1; i < xv.data.size(); ++i)
    if (xv.data[i] > xv.data[arg]) arg = i;
  TensorT<S> out = TensorT<S>::scalar(xv.data[arg]);
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id, arg](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) dx[arg] += t.gbuf(self)[0];
      },
      "reduce_max_all");
}

template <class S>
VarT<S> sum_all(VarT<S> x) {
  const TensorT<S>& xv = x.val();
  double acc = 0.0;
  for (S v : xv.data) acc += static_cast<double>(v);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  return x.tape->make(
      std::move(out), {x.id},
      [xid = x.id](TapeT<S>& t, int self) {
        if (S* dx = t.grad_ptr(xid)) {
          const S g = t.gbuf(self)[0];
          const size_t count = t.node(xid).value.data.size();
          for (size_t i = 0; i < count; ++i) dx[i] += g;
        }
      },
      "sum_all");
}

}  // namespace mvmol
