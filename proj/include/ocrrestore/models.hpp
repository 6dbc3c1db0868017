#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ocrrestore/corpus.hpp"
#include "ocrrestore/encoding.hpp"
#include "ocrrestore/error.hpp"
#include "ocrrestore/neural/adam.hpp"
#include "ocrrestore/neural/layers.hpp"
#include "ocrrestore/neural/params.hpp"
#include "ocrrestore/neural/tape.hpp"
#include "ocrrestore/rng.hpp"

namespace ocrrestore {

enum class ModelKind { transformer_corrector, gru_generator, sgns_embedding };

std::string kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

struct TransformerConfig {
  int layers = 3;
  int heads = 8;
  int d_model = 128;
  int d_ff = 512;
  double dropout = 0.1;
  double lr = 5e-4;  // static, no schedule
  int batch_size = 256;
  int max_epochs = 30;
  int window = 1;  // word window the model was trained for
  std::uint64_t seed = 1;
};

struct GruConfig {
  int emb_dim = 128;
  int hidden = 512;
  double lr = 5e-4;
  int batch_size = 64;
  int max_epochs = 30;
  double teacher_forcing = 0.5;  // per-character gold-vs-model coin
  std::uint64_t seed = 1;
};

// Provenance carried inside every checkpoint.
struct ModelManifest {
  std::uint64_t seed = 0;
  std::string data_fingerprint;  // FNV-1a of the training data
  std::string checkpoint_policy = "best_epoch_mean_loss";
  int best_epoch = 0;  // 1-based epoch whose parameters are stored
  std::vector<double> loss_history;
};

// One trained sequence-to-sequence model. Depending on `kind`, either the
// transformer or the GRU config is the active one; the other keeps defaults.
struct Seq2SeqModel {
  ModelKind kind = ModelKind::transformer_corrector;
  TransformerConfig tcfg;
  GruConfig gcfg;
  neural::ParamStore<float> params;
  ModelManifest manifest;
};

// ---- parameter construction (shared by training and gradient checks) ----

template <typename T>
void init_transformer_params(neural::ParamStore<T>& ps, const TransformerConfig& cfg,
                             const CharVocab& vocab, RandomSource& rng);

template <typename T>
void init_gru_params(neural::ParamStore<T>& ps, const GruConfig& cfg, const CharVocab& vocab,
                     RandomSource& rng);

// Closed-form parameter count for a transformer built from `cfg` (documented
// in the README); init_transformer_params produces exactly this many scalars.
std::int64_t transformer_param_count(const TransformerConfig& cfg, const CharVocab& vocab);

// Fresh models with seed-deterministic initialization: same config + seed
// gives bitwise-identical parameters.
Seq2SeqModel build_transformer(const TransformerConfig& cfg);
Seq2SeqModel build_gru_generator(const GruConfig& cfg);

// ---- forward passes, templated so 64-bit gradient checks share the code ----

template <typename T>
struct TransformerForward {
  using Var = typename neural::Tape<T>::Var;

  neural::Tape<T>* tape;
  neural::ParamLease<T>* lease;
  const TransformerConfig* cfg;
  RandomSource* rng;
  bool training = false;

  // src ids row-major [batch, src_len] -> encoder memory [batch*src_len, d].
  Var encode(const std::vector<TokenId>& src, int batch, int src_len,
             const std::vector<std::uint8_t>& src_mask) const;

  // decoder input ids [batch, tgt_len] -> logits [batch*tgt_len, |V|].
  Var decode_logits(Var memory, const std::vector<std::uint8_t>& src_mask, int batch, int src_len,
                    const std::vector<TokenId>& dec_in, int tgt_len,
                    const std::vector<std::uint8_t>& dec_mask) const;

  // teacher-forced mean cross-entropy over non-pad label positions.
  Var loss(const EncodedBatch& b) const;
};

template <typename T>
struct GruForward {
  using Var = typename neural::Tape<T>::Var;

  neural::Tape<T>* tape;
  neural::ParamLease<T>* lease;
  const GruConfig* cfg;

  // encoder final hidden state [batch, hidden]; masked steps carry the
  // previous hidden forward so padding does not disturb short rows.
  Var encode_context(const std::vector<TokenId>& src, int batch, int src_len,
                     const std::vector<std::uint8_t>& src_mask) const;

  // One decoder step: h -> h'; logits come from
  // linear(concat(context, h', emb(prev))).
  struct Step {
    Var h;
    Var logits;  // [batch, |V|]
  };
  Step decode_step(Var context, Var h, const std::vector<TokenId>& prev_ids) const;

  // Anti-copy training loss over one batch: CE against the labels plus the
  // reciprocal of CE against the sources (eps-guarded), both pad-masked.
  // Decoder inputs follow a per-row, per-step gold-vs-argmax coin.
  Var anti_copy_batch_loss(const EncodedBatch& b, double teacher_forcing, RandomSource& coin_rng,
                           T eps) const;
};

// ---- training & decoding ----

// Teacher-forced training with early stop: stops when the epoch-mean loss
// has improved by less than `min_improve` for `patience` consecutive epochs.
// Keeps the parameters of the best epoch.
struct TrainOptions {
  double min_improve = 1e-4;
  int patience = 3;
  std::string data_fingerprint;
};

Seq2SeqModel train_corrector(const DynamicBatcher& batcher, const TransformerConfig& cfg,
                             const TrainOptions& opts = {});

// Scoring interface the beam searches over: log-probability row over the
// output vocabulary for the next token after `prefix` (prefix starts <sos>).
using StepScorer = std::function<std::vector<double>(const std::vector<TokenId>& prefix)>;

// Length-bounded beam search. Generated length (after <sos>) is at most
// max_len; a hypothesis that reaches max_len without <eos> is closed with a
// forced <eos> carrying its actual log-probability. Best finished hypothesis
// by total log-probability wins; no length normalization; ties broken by
// token-id lexicographic order. Returns ids starting <sos>, ending <eos>.
std::vector<TokenId> beam_decode_scored(const StepScorer& scorer, int vocab_size, TokenId eos,
                                        int k, int max_len);

// The scored search driven by the corrector's decoder.
std::vector<TokenId> beam_decode(const Seq2SeqModel& model, const std::vector<TokenId>& source,
                                 int k, int max_len);

// Corrects every token of the stream through window encoding + beam search.
// One output token per input token, order preserved. beam_k defaults to the
// evaluation setting.
TokenStream correct_tokens(const Seq2SeqModel& model, const TokenStream& stream, int window,
                           int beam_k = 3, int threads = 1);

}  // namespace ocrrestore
