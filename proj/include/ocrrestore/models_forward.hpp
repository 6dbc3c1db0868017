#pragma once

// Template bodies for models.hpp — included by the library and by tests
// that instantiate the 64-bit gradient-check variants.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ocrrestore/models.hpp"

namespace ocrrestore {

namespace detail {

inline std::string layer_name(const char* stack, int i, const char* tail) {
  return std::string(stack) + std::to_string(i) + "." + tail;
}

template <typename T>
neural::AttentionVars<T> attention_vars(const neural::ParamLease<T>& lease,
                                        const std::string& prefix) {
  return neural::AttentionVars<T>{(lease)[prefix + ".wq"], (lease)[prefix + ".bq"],
                                  (lease)[prefix + ".wk"], (lease)[prefix + ".bk"],
                                  (lease)[prefix + ".wv"], (lease)[prefix + ".bv"],
                                  (lease)[prefix + ".wo"], (lease)[prefix + ".bo"]};
}

template <typename T>
neural::FeedForwardVars<T> ff_vars(const neural::ParamLease<T>& lease, const std::string& prefix) {
  return neural::FeedForwardVars<T>{(lease)[prefix + ".w1"], (lease)[prefix + ".b1"],
                                    (lease)[prefix + ".w2"], (lease)[prefix + ".b2"]};
}

template <typename T>
void add_attention_params(neural::ParamStore<T>& ps, const std::string& prefix, int d,
                          RandomSource& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    ps.add_uniform(prefix + "." + w, {d, d}, d, rng);
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    ps.add_uniform(prefix + "." + b, {d}, d, rng);
  }
}

template <typename T>
void add_layer_norm_params(neural::ParamStore<T>& ps, const std::string& prefix, int d) {
  ps.add(prefix + ".g", neural::Tensor<T>({d}, T{1}));
  ps.add(prefix + ".b", neural::Tensor<T>({d}, T{0}));
}

template <typename T>
void add_ff_params(neural::ParamStore<T>& ps, const std::string& prefix, int d, int f,
                   RandomSource& rng) {
  ps.add_uniform(prefix + ".w1", {d, f}, d, rng);
  ps.add_uniform(prefix + ".b1", {f}, d, rng);
  ps.add_uniform(prefix + ".w2", {f, d}, f, rng);
  ps.add_uniform(prefix + ".b2", {d}, f, rng);
}

inline std::vector<TokenId> position_ids(int batch, int len) {
  std::vector<TokenId> pos(static_cast<std::size_t>(batch) * static_cast<std::size_t>(len));
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < len; ++t) pos[static_cast<std::size_t>(b * len + t)] = t;
  }
  return pos;
}

inline std::vector<int> to_int_ids(const std::vector<TokenId>& ids) {
  return std::vector<int>(ids.begin(), ids.end());
}

}  // namespace detail

template <typename T>
void init_transformer_params(neural::ParamStore<T>& ps, const TransformerConfig& cfg,
                             const CharVocab& vocab, RandomSource& rng) {
  if (cfg.layers < 1) throw UsageError("transformer needs at least 1 layer");
  if (cfg.heads < 1 || cfg.d_model % cfg.heads != 0) {
    throw UsageError("head count must divide d_model (" + std::to_string(cfg.heads) + " vs " +
                     std::to_string(cfg.d_model) + ")");
  }
  if (cfg.d_ff < 1 || cfg.window < 1 || cfg.window % 2 == 0) {
    throw UsageError("invalid transformer config: d_ff >= 1 and odd window required");
  }
  const int d = cfg.d_model, f = cfg.d_ff, v = vocab.size();
  ps.add_uniform("src_embed", {v, d}, d, rng);
  ps.add_uniform("src_pos", {max_source_len(cfg.window), d}, d, rng);
  ps.add_uniform("tgt_embed", {v, d}, d, rng);
  ps.add_uniform("tgt_pos", {max_target_len(), d}, d, rng);
  for (int i = 0; i < cfg.layers; ++i) {
    detail::add_attention_params(ps, detail::layer_name("enc", i, "att"), d, rng);
    detail::add_layer_norm_params(ps, detail::layer_name("enc", i, "ln1"), d);
    detail::add_ff_params(ps, detail::layer_name("enc", i, "ff"), d, f, rng);
    detail::add_layer_norm_params(ps, detail::layer_name("enc", i, "ln2"), d);
  }
  for (int i = 0; i < cfg.layers; ++i) {
    detail::add_attention_params(ps, detail::layer_name("dec", i, "self"), d, rng);
    detail::add_layer_norm_params(ps, detail::layer_name("dec", i, "ln1"), d);
    detail::add_attention_params(ps, detail::layer_name("dec", i, "cross"), d, rng);
    detail::add_layer_norm_params(ps, detail::layer_name("dec", i, "ln2"), d);
    detail::add_ff_params(ps, detail::layer_name("dec", i, "ff"), d, f, rng);
    detail::add_layer_norm_params(ps, detail::layer_name("dec", i, "ln3"), d);
  }
  ps.add_uniform("out.w", {d, v}, d, rng);
  ps.add_uniform("out.b", {v}, d, rng);
}

template <typename T>
void init_gru_params(neural::ParamStore<T>& ps, const GruConfig& cfg, const CharVocab& vocab,
                     RandomSource& rng) {
  if (cfg.emb_dim < 1 || cfg.hidden < 1) throw UsageError("invalid gru config");
  const int e = cfg.emb_dim, h = cfg.hidden, v = vocab.size();
  ps.add_uniform("enc_embed", {v, e}, e, rng);
  ps.add_uniform("dec_embed", {v, e}, e, rng);
  for (const char* stack : {"enc", "dec"}) {
    const std::string p(stack);
    for (const char* gate : {"r", "z", "n"}) {
      const std::string g(gate);
      ps.add_uniform(p + ".w_i" + g, {e, h}, h, rng);
      ps.add_uniform(p + ".b_i" + g, {h}, h, rng);
      ps.add_uniform(p + ".w_h" + g, {h, h}, h, rng);
      ps.add_uniform(p + ".b_h" + g, {h}, h, rng);
    }
  }
  // prediction head over concat(context, hidden, prev-char embedding)
  ps.add_uniform("out.w", {2 * h + e, v}, 2 * h + e, rng);
  ps.add_uniform("out.b", {v}, 2 * h + e, rng);
}

template <typename T>
typename TransformerForward<T>::Var TransformerForward<T>::encode(
    const std::vector<TokenId>& src, int batch, int src_len,
    const std::vector<std::uint8_t>& src_mask) const {
  auto& t = *tape;
  const auto& L = *lease;
  const int d = cfg->d_model;
  const T drop = static_cast<T>(cfg->dropout);

  Var x = t.embedding_rows(L["src_embed"], detail::to_int_ids(src));
  x = t.affine(x, std::sqrt(static_cast<T>(d)), T{0});
  x = t.add(x, t.embedding_rows(L["src_pos"], detail::position_ids(batch, src_len)));
  x = t.dropout(x, drop, *rng, training);

  const neural::Tensor<T> mask =
      neural::padding_attention_mask<T>(src_mask, batch, src_len, src_len);
  for (int i = 0; i < cfg->layers; ++i) {
    auto att = neural::multi_head_attention(
        t, x, x, neural::Tensor<T>(mask), batch, cfg->heads, drop, *rng, training,
        detail::attention_vars(L, detail::layer_name("enc", i, "att")));
    att = t.dropout(att, drop, *rng, training);
    x = t.layer_norm(t.add(x, att), L[detail::layer_name("enc", i, "ln1.g")],
                     L[detail::layer_name("enc", i, "ln1.b")]);
    auto ff = neural::feed_forward(t, x, detail::ff_vars(L, detail::layer_name("enc", i, "ff")));
    ff = t.dropout(ff, drop, *rng, training);
    x = t.layer_norm(t.add(x, ff), L[detail::layer_name("enc", i, "ln2.g")],
                     L[detail::layer_name("enc", i, "ln2.b")]);
  }
  return x;
}

template <typename T>
typename TransformerForward<T>::Var TransformerForward<T>::decode_logits(
    Var memory, const std::vector<std::uint8_t>& src_mask, int batch, int src_len,
    const std::vector<TokenId>& dec_in, int tgt_len,
    const std::vector<std::uint8_t>& dec_mask) const {
  auto& t = *tape;
  const auto& L = *lease;
  const int d = cfg->d_model;
  const T drop = static_cast<T>(cfg->dropout);

  Var y = t.embedding_rows(L["tgt_embed"], detail::to_int_ids(dec_in));
  y = t.affine(y, std::sqrt(static_cast<T>(d)), T{0});
  y = t.add(y, t.embedding_rows(L["tgt_pos"], detail::position_ids(batch, tgt_len)));
  y = t.dropout(y, drop, *rng, training);

  const neural::Tensor<T> self_mask = neural::causal_attention_mask<T>(dec_mask, batch, tgt_len);
  const neural::Tensor<T> cross_mask =
      neural::padding_attention_mask<T>(src_mask, batch, tgt_len, src_len);
  for (int i = 0; i < cfg->layers; ++i) {
    auto self = neural::multi_head_attention(
        t, y, y, neural::Tensor<T>(self_mask), batch, cfg->heads, drop, *rng, training,
        detail::attention_vars(L, detail::layer_name("dec", i, "self")));
    self = t.dropout(self, drop, *rng, training);
    y = t.layer_norm(t.add(y, self), L[detail::layer_name("dec", i, "ln1.g")],
                     L[detail::layer_name("dec", i, "ln1.b")]);
    auto cross = neural::multi_head_attention(
        t, y, memory, neural::Tensor<T>(cross_mask), batch, cfg->heads, drop, *rng, training,
        detail::attention_vars(L, detail::layer_name("dec", i, "cross")));
    cross = t.dropout(cross, drop, *rng, training);
    y = t.layer_norm(t.add(y, cross), L[detail::layer_name("dec", i, "ln2.g")],
                     L[detail::layer_name("dec", i, "ln2.b")]);
    auto ff = neural::feed_forward(t, y, detail::ff_vars(L, detail::layer_name("dec", i, "ff")));
    ff = t.dropout(ff, drop, *rng, training);
    y = t.layer_norm(t.add(y, ff), L[detail::layer_name("dec", i, "ln3.g")],
                     L[detail::layer_name("dec", i, "ln3.b")]);
  }
  return t.linear(y, L["out.w"], L["out.b"]);
}

template <typename T>
typename TransformerForward<T>::Var TransformerForward<T>::loss(const EncodedBatch& b) const {
  auto& t = *tape;
  const int steps = b.tgt_len - 1;
  neural::require(steps >= 1, "label sequences too short to train on");

  std::vector<TokenId> dec_in(static_cast<std::size_t>(b.batch) * steps);
  std::vector<std::uint8_t> dec_mask(dec_in.size());
  std::vector<int> target_ids(dec_in.size());
  std::vector<T> weights(dec_in.size());
  for (int r = 0; r < b.batch; ++r) {
    for (int s = 0; s < steps; ++s) {
      const std::size_t i = static_cast<std::size_t>(r * steps + s);
      dec_in[i] = b.tgt(r, s);
      dec_mask[i] = b.tgt_mask[static_cast<std::size_t>(r) * b.tgt_len + s];
      target_ids[i] = b.tgt(r, s + 1);
      weights[i] = b.tgt_mask[static_cast<std::size_t>(r) * b.tgt_len + s + 1] ? T{1} : T{0};
    }
  }
  Var memory = encode(b.sources, b.batch, b.src_len, b.src_mask);
  Var logits = decode_logits(memory, b.src_mask, b.batch, b.src_len, dec_in, steps, dec_mask);
  Var logp = t.log_softmax_rows(logits);
  return t.masked_nll(logp, std::move(target_ids), std::move(weights));
}

template <typename T>
typename GruForward<T>::Var GruForward<T>::encode_context(
    const std::vector<TokenId>& src, int batch, int src_len,
    const std::vector<std::uint8_t>& src_mask) const {
  auto& t = *tape;
  const auto& L = *lease;
  const neural::GruVars<T> gru{L["enc.w_ir"], L["enc.w_iz"], L["enc.w_in"],
                               L["enc.w_hr"], L["enc.w_hz"], L["enc.w_hn"],
                               L["enc.b_ir"], L["enc.b_iz"], L["enc.b_in"],
                               L["enc.b_hr"], L["enc.b_hz"], L["enc.b_hn"]};
  Var h = t.leaf(neural::Tensor<T>({batch, cfg->hidden}), false);
  std::vector<int> ids(static_cast<std::size_t>(batch));
  std::vector<T> keep(static_cast<std::size_t>(batch));
  std::vector<T> carry(static_cast<std::size_t>(batch));
  for (int s = 0; s < src_len; ++s) {
    for (int b = 0; b < batch; ++b) {
      ids[static_cast<std::size_t>(b)] = src[static_cast<std::size_t>(b) * src_len + s];
      const bool real = src_mask[static_cast<std::size_t>(b) * src_len + s] != 0;
      keep[static_cast<std::size_t>(b)] = real ? T{1} : T{0};
      carry[static_cast<std::size_t>(b)] = real ? T{0} : T{1};
    }
    Var x = t.embedding_rows(L["enc_embed"], ids);
    Var hn = neural::gru_cell(t, x, h, gru);
    h = t.add(t.mul_colvec(hn, keep), t.mul_colvec(h, carry));
  }
  return h;
}

template <typename T>
typename GruForward<T>::Step GruForward<T>::decode_step(Var context, Var h,
                                                        const std::vector<TokenId>& prev_ids) const {
  auto& t = *tape;
  const auto& L = *lease;
  const neural::GruVars<T> gru{L["dec.w_ir"], L["dec.w_iz"], L["dec.w_in"],
                               L["dec.w_hr"], L["dec.w_hz"], L["dec.w_hn"],
                               L["dec.b_ir"], L["dec.b_iz"], L["dec.b_in"],
                               L["dec.b_hr"], L["dec.b_hz"], L["dec.b_hn"]};
  Var emb = t.embedding_rows(L["dec_embed"], detail::to_int_ids(prev_ids));
  Var hn = neural::gru_cell(t, emb, h, gru);
  Var feat = t.concat_cols({context, hn, emb});
  return Step{hn, t.linear(feat, L["out.w"], L["out.b"])};
}

template <typename T>
typename GruForward<T>::Var GruForward<T>::anti_copy_batch_loss(const EncodedBatch& b,
                                                                double teacher_forcing,
                                                                RandomSource& coin_rng,
                                                                T eps) const {
  auto& t = *tape;
  const int steps = b.tgt_len - 1;
  neural::require(steps >= 1, "label sequences too short to train on");

  Var context = encode_context(b.sources, b.batch, b.src_len, b.src_mask);
  Var h = context;
  std::vector<TokenId> prev(static_cast<std::size_t>(b.batch));
  for (int r = 0; r < b.batch; ++r) prev[static_cast<std::size_t>(r)] = b.tgt(r, 0);

  std::vector<Var> step_logits;
  step_logits.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    Step step = decode_step(context, h, prev);
    h = step.h;
    step_logits.push_back(step.logits);
    if (s + 1 < steps) {
      const neural::Tensor<T>& lg = t.val(step.logits);
      for (int r = 0; r < b.batch; ++r) {
        const TokenId gold = b.tgt(r, s + 1);
        if (coin_rng.uniform() < teacher_forcing) {
          prev[static_cast<std::size_t>(r)] = gold;
        } else {
          int best = 0;
          for (int c = 1; c < lg.dim(1); ++c) {
            if (lg.at(r, c) > lg.at(r, best)) best = c;
          }
          prev[static_cast<std::size_t>(r)] = static_cast<TokenId>(best);
        }
      }
    }
  }

  // rows step-major: step s holds rows [s*batch, (s+1)*batch)
  Var logp = t.log_softmax_rows(t.concat_rows(step_logits));
  std::vector<int> ids_y(static_cast<std::size_t>(steps) * b.batch);
  std::vector<T> w_y(ids_y.size());
  std::vector<int> ids_x(ids_y.size());
  std::vector<T> w_x(ids_y.size());
  for (int s = 0; s < steps; ++s) {
    for (int r = 0; r < b.batch; ++r) {
      const std::size_t i = static_cast<std::size_t>(s * b.batch + r);
      ids_y[i] = b.tgt(r, s + 1);
      w_y[i] = b.tgt_mask[static_cast<std::size_t>(r) * b.tgt_len + s + 1] ? T{1} : T{0};
      if (s < b.src_len && b.src_mask[static_cast<std::size_t>(r) * b.src_len + s] != 0) {
        ids_x[i] = b.src(r, s);
        w_x[i] = T{1};
      } else {
        ids_x[i] = CharVocab::kPad;
        w_x[i] = T{0};
      }
    }
  }
  Var ce_y = t.masked_nll(logp, std::move(ids_y), std::move(w_y));
  Var ce_x = t.masked_nll(logp, std::move(ids_x), std::move(w_x));
  return t.add(ce_y, t.inv(t.affine(ce_x, T{1}, eps)));
}

}  // namespace ocrrestore
