#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ocrrestore/error.hpp"
#include "ocrrestore/neural/params.hpp"
#include "ocrrestore/neural/tape.hpp"
#include "ocrrestore/neural/tensor.hpp"

namespace ocrrestore {
namespace neural {

// Additive attention-mask value for blocked positions. Kept finite so the
// non-finite guard stays useful.
template <typename T>
constexpr T attention_block() {
  return static_cast<T>(-1e9);
}

// Mirrors a ParamStore onto a tape as gradient-carrying leaves for one
// forward/backward pass, then copies gradients back with harvest().
template <typename T>
class ParamLease {
 public:
  using Var = typename Tape<T>::Var;

  ParamLease(Tape<T>& tape, ParamStore<T>& store, bool needs_grad = true)
      : tape_(&tape), store_(&store) {
    vars_.reserve(store.entries().size());
    for (const auto& e : store.entries()) {
      vars_.push_back(tape.leaf(e.value, needs_grad));
      index_[e.name] = static_cast<int>(vars_.size() - 1);
    }
  }

  Var operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("parameter not leased: " + name);
    return vars_[static_cast<std::size_t>(it->second)];
  }

  // Accumulates tape gradients into the store (store grads are not cleared
  // here, so several batches can sum if desired).
  void harvest() {
    auto& entries = store_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const Tensor<T>& g = tape_->grad(vars_[i]);
      if (g.numel() == 0) continue;
      Tensor<T>& dst = entries[i].grad;
      for (Index j = 0; j < g.numel(); ++j) dst.at(j) += g.at(j);
    }
  }

 private:
  Tape<T>* tape_;
  ParamStore<T>* store_;
  std::vector<Var> vars_;
  std::unordered_map<std::string, int> index_;
};

// ---- attention masks ----
//
// key_mask is row-major [batch, len] with 1 = real token, 0 = padding.

template <typename T>
Tensor<T> padding_attention_mask(const std::vector<std::uint8_t>& key_mask, Index batch, Index lq,
                                 Index lk) {
  require(static_cast<Index>(key_mask.size()) == batch * lk, "padding mask size");
  Tensor<T> m({batch, lq, lk});
  for (Index b = 0; b < batch; ++b) {
    for (Index j = 0; j < lk; ++j) {
      const T v = key_mask[static_cast<std::size_t>(b * lk + j)] ? T{0} : attention_block<T>();
      for (Index i = 0; i < lq; ++i) m.at(b, i, j) = v;
    }
  }
  return m;
}

// Padding mask combined with a strict autoregressive constraint: position i
// may only look at positions <= i.
template <typename T>
Tensor<T> causal_attention_mask(const std::vector<std::uint8_t>& key_mask, Index batch, Index len) {
  Tensor<T> m = padding_attention_mask<T>(key_mask, batch, len, len);
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < len; ++i) {
      for (Index j = i + 1; j < len; ++j) m.at(b, i, j) = attention_block<T>();
    }
  }
  return m;
}

// ---- blocks ----

template <typename T>
struct AttentionVars {
  using Var = typename Tape<T>::Var;
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

// Projects queries from q_in and keys/values from kv_in, applies scaled
// dot-product attention per head, then the output projection.
template <typename T>
typename Tape<T>::Var multi_head_attention(Tape<T>& tape, typename Tape<T>::Var q_in,
                                           typename Tape<T>::Var kv_in, Tensor<T> mask, Index batch,
                                           Index heads, T attn_dropout, RandomSource& rng,
                                           bool training, const AttentionVars<T>& p) {
  auto q = tape.linear(q_in, p.wq, p.bq);
  auto k = tape.linear(kv_in, p.wk, p.bk);
  auto v = tape.linear(kv_in, p.wv, p.bv);
  auto att = tape.attention(q, k, v, std::move(mask), batch, heads, attn_dropout, rng, training);
  return tape.linear(att, p.wo, p.bo);
}

template <typename T>
struct FeedForwardVars {
  using Var = typename Tape<T>::Var;
  Var w1, b1, w2, b2;
};

template <typename T>
typename Tape<T>::Var feed_forward(Tape<T>& tape, typename Tape<T>::Var x,
                                   const FeedForwardVars<T>& p) {
  return tape.linear(tape.relu(tape.linear(x, p.w1, p.b1)), p.w2, p.b2);
}

template <typename T>
struct GruVars {
  using Var = typename Tape<T>::Var;
  Var w_ir, w_iz, w_in, w_hr, w_hz, w_hn;
  Var b_ir, b_iz, b_in, b_hr, b_hz, b_hn;
};

// One GRU step. Gate equations follow the convention where the reset gate
// multiplies the transformed previous hidden state:
//   r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h
template <typename T>
typename Tape<T>::Var gru_cell(Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var h,
                               const GruVars<T>& p) {
  auto r = tape.sigmoid(tape.add(tape.linear(x, p.w_ir, p.b_ir), tape.linear(h, p.w_hr, p.b_hr)));
  auto z = tape.sigmoid(tape.add(tape.linear(x, p.w_iz, p.b_iz), tape.linear(h, p.w_hz, p.b_hz)));
  auto n = tape.tanh_act(
      tape.add(tape.linear(x, p.w_in, p.b_in), tape.mul(r, tape.linear(h, p.w_hn, p.b_hn))));
  // (1 - z) * n + z * h
  auto one_minus_z = tape.affine(z, T{-1}, T{1});
  return tape.add(tape.mul(one_minus_z, n), tape.mul(z, h));
}

// ---- standalone softmax cross-entropy ----
//
// Row-wise softmax over logits followed by weighted-mean negative
// log-likelihood. Returns the loss and d(loss)/d(logits) in closed form
// (softmax minus one-hot, scaled by weight / total weight).
template <typename T>
struct CrossEntropyResult {
  T loss{};
  Tensor<T> dlogits;
};

template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& ids,
                                            const std::vector<T>& weights) {
  require(logits.ndim() == 2 && logits.dim(0) == static_cast<Index>(ids.size()) &&
              ids.size() == weights.size(),
          "softmax_cross_entropy shapes");
  T total_w{0};
  for (T w : weights) total_w += w;
  require(total_w > T{0}, "softmax_cross_entropy needs an unmasked position");
  CrossEntropyResult<T> out;
  out.dlogits = Tensor<T>::zeros(logits.shape);
  const Index rows = logits.dim(0), cols = logits.dim(1);
  T loss{0};
  for (Index r = 0; r < rows; ++r) {
    const T w = weights[static_cast<std::size_t>(r)];
    const int id = ids[static_cast<std::size_t>(r)];
    require(id >= 0 && id < cols, "softmax_cross_entropy id range");
    T mx = logits.at(r, 0);
    for (Index c = 1; c < cols; ++c) mx = std::max(mx, logits.at(r, c));
    T sum{0};
    for (Index c = 0; c < cols; ++c) sum += std::exp(logits.at(r, c) - mx);
    const T log_z = mx + std::log(sum);
    loss -= w * (logits.at(r, id) - log_z);
    if (w == T{0}) continue;
    const T scale = w / total_w;
    for (Index c = 0; c < cols; ++c) {
      out.dlogits.at(r, c) = scale * std::exp(logits.at(r, c) - log_z);
    }
    out.dlogits.at(r, id) -= scale;
  }
  out.loss = loss / total_w;
  return out;
}

}  // namespace neural
}  // namespace ocrrestore
