#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "ocrrestore/log.hpp"
#include "ocrrestore/models_forward.hpp"

namespace ocrrestore {

std::string kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::transformer_corrector:
      return "transformer_corrector";
    case ModelKind::gru_generator:
      return "gru_generator";
    case ModelKind::sgns_embedding:
      return "sgns_embedding";
  }
  throw UsageError("unrepresentable model kind");
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "transformer_corrector") return ModelKind::transformer_corrector;
  if (name == "gru_generator") return ModelKind::gru_generator;
  if (name == "sgns_embedding") return ModelKind::sgns_embedding;
  throw DataError("unknown model kind: " + name);
}

std::int64_t transformer_param_count(const TransformerConfig& cfg, const CharVocab& vocab) {
  const std::int64_t d = cfg.d_model, f = cfg.d_ff, v = vocab.size(), l = cfg.layers;
  const std::int64_t pe = max_source_len(cfg.window), pd = max_target_len();
  const std::int64_t attention = 4 * (d * d + d);
  const std::int64_t norm = 2 * d;
  const std::int64_t ff = d * f + f + f * d + d;
  const std::int64_t enc_layer = attention + ff + 2 * norm;
  const std::int64_t dec_layer = 2 * attention + ff + 3 * norm;
  return 2 * v * d        // token embeddings (source + target)
         + (pe + pd) * d  // learned positional tables
         + l * (enc_layer + dec_layer) + d * v + v;  // stacks + output head
}

Seq2SeqModel build_transformer(const TransformerConfig& cfg) {
  Seq2SeqModel model;
  model.kind = ModelKind::transformer_corrector;
  model.tcfg = cfg;
  model.manifest.seed = cfg.seed;
  SplitMix64 rng(cfg.seed);
  init_transformer_params(model.params, cfg, CharVocab::instance(), rng);
  return model;
}

Seq2SeqModel build_gru_generator(const GruConfig& cfg) {
  Seq2SeqModel model;
  model.kind = ModelKind::gru_generator;
  model.gcfg = cfg;
  model.manifest.seed = cfg.seed;
  SplitMix64 rng(cfg.seed);
  init_gru_params(model.params, cfg, CharVocab::instance(), rng);
  return model;
}

namespace {

std::vector<float> snapshot(const neural::ParamStore<float>& ps) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(ps.total_params()));
  for (const auto& e : ps.entries()) {
    out.insert(out.end(), e.value.data.begin(), e.value.data.end());
  }
  return out;
}

void restore(neural::ParamStore<float>& ps, const std::vector<float>& snap) {
  std::size_t off = 0;
  for (auto& e : ps.entries()) {
    std::copy(snap.begin() + static_cast<std::ptrdiff_t>(off),
              snap.begin() + static_cast<std::ptrdiff_t>(off + e.value.data.size()),
              e.value.data.begin());
    off += e.value.data.size();
  }
}

// count of non-pad target positions a batch contributes to the loss mean
std::int64_t label_positions(const EncodedBatch& b) {
  std::int64_t n = 0;
  for (int r = 0; r < b.batch; ++r) {
    for (int s = 1; s < b.tgt_len; ++s) {
      n += b.tgt_mask[static_cast<std::size_t>(r) * b.tgt_len + s] ? 1 : 0;
    }
  }
  return n;
}

}  // namespace

Seq2SeqModel train_corrector(const DynamicBatcher& batcher, const TransformerConfig& cfg,
                             const TrainOptions& opts) {
  if (batcher.num_samples() == 0) throw DataError("empty dataset: no training samples");
  if (batcher.window() != cfg.window) {
    throw UsageError("batcher window " + std::to_string(batcher.window()) +
                     " does not match model window " + std::to_string(cfg.window));
  }
  Seq2SeqModel model = build_transformer(cfg);
  model.manifest.data_fingerprint = opts.data_fingerprint;

  SplitMix64 root(cfg.seed);
  neural::Adam<float> adam(static_cast<float>(cfg.lr));

  double best_mean = std::numeric_limits<double>::infinity();
  std::vector<float> best_params = snapshot(model.params);
  int best_epoch = 0;
  int stall = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    SplitMix64 data_rng = root.fork(static_cast<std::uint64_t>(1000 + epoch));
    SplitMix64 drop_rng = root.fork(static_cast<std::uint64_t>(2000 + epoch));
    const std::vector<EncodedBatch> batches = batcher.make_epoch(data_rng);

    double loss_sum = 0.0;
    std::int64_t weight_sum = 0;
    for (const EncodedBatch& b : batches) {
      neural::Tape<float> tape;
      neural::ParamLease<float> lease(tape, model.params, true);
      TransformerForward<float> fw{&tape, &lease, &cfg, &drop_rng, true};
      const auto loss = fw.loss(b);
      tape.backward(loss);
      model.params.zero_grads();
      lease.harvest();
      adam.step(model.params);
      const std::int64_t w = label_positions(b);
      loss_sum += static_cast<double>(tape.val(loss).at(0)) * static_cast<double>(w);
      weight_sum += w;
    }
    const double mean = weight_sum > 0 ? loss_sum / static_cast<double>(weight_sum) : 0.0;
    model.manifest.loss_history.push_back(mean);
    log::info("corrector epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.max_epochs) +
              " mean loss " + std::to_string(mean));

    if (mean < best_mean) {
      const double improvement = best_mean - mean;
      best_mean = mean;
      best_params = snapshot(model.params);
      best_epoch = epoch;
      stall = std::isfinite(improvement) && improvement < opts.min_improve ? stall + 1 : 0;
    } else {
      ++stall;
    }
    if (stall >= opts.patience) {
      log::info("corrector converged after " + std::to_string(epoch) + " epochs");
      break;
    }
  }
  restore(model.params, best_params);
  model.manifest.best_epoch = best_epoch;
  model.manifest.checkpoint_policy = "best_epoch_mean_loss";
  return model;
}

std::vector<TokenId> beam_decode_scored(const StepScorer& scorer, int vocab_size, TokenId eos,
                                        int k, int max_len) {
  if (k < 1) throw UsageError("beam width must be >= 1");
  if (max_len < 1) throw UsageError("max decode length must be >= 1");

  struct Hyp {
    std::vector<TokenId> ids;
    double logp = 0.0;
    bool finished = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.ids < b.ids;
  };

  std::vector<Hyp> beam{Hyp{{CharVocab::kSos}, 0.0, false}};
  for (int step = 1; step <= max_len; ++step) {
    bool any_open = false;
    std::vector<Hyp> candidates;
    for (const Hyp& h : beam) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      any_open = true;
      const std::vector<double> row = scorer(h.ids);
      neural::require(static_cast<int>(row.size()) == vocab_size, "scorer row size");
      if (step == max_len) {
        Hyp done = h;
        done.ids.push_back(eos);
        done.logp += row[static_cast<std::size_t>(eos)];
        done.finished = true;
        candidates.push_back(std::move(done));
      } else {
        for (TokenId id = 0; id < vocab_size; ++id) {
          Hyp next = h;
          next.ids.push_back(id);
          next.logp += row[static_cast<std::size_t>(id)];
          next.finished = id == eos;
          candidates.push_back(std::move(next));
        }
      }
    }
    if (!any_open) break;
    std::sort(candidates.begin(), candidates.end(), better);
    if (static_cast<int>(candidates.size()) > k) {
      candidates.resize(static_cast<std::size_t>(k));
    }
    beam = std::move(candidates);
  }
  for (const Hyp& h : beam) {
    if (h.finished) return h.ids;  // beam is sorted best-first
  }
  throw NumericError("beam search ended without a finished hypothesis");
}

namespace {

// Per-prefix scorer over the corrector's decoder; owns one tape whose
// leased parameters and encoder memory persist across truncations.
class CorrectorScorer {
 public:
  CorrectorScorer(const Seq2SeqModel& model, const std::vector<TokenId>& source)
      : cfg_(model.tcfg),
        params_(const_cast<neural::ParamStore<float>&>(model.params)),
        lease_(tape_, params_, false),
        fw_{&tape_, &lease_, &cfg_, &rng_, false} {
    const int src_len = static_cast<int>(source.size());
    neural::require(src_len >= 1 && src_len <= max_source_len(cfg_.window),
                    "source length out of range for this model");
    src_mask_.assign(source.size(), 1);
    src_len_ = src_len;
    memory_ = fw_.encode(source, 1, src_len, src_mask_);
    base_ = tape_.size();
  }

  std::vector<double> operator()(const std::vector<TokenId>& prefix) {
    tape_.truncate(base_);
    const int len = static_cast<int>(prefix.size());
    neural::require(len >= 1 && len <= max_target_len(), "decode prefix too long");
    const std::vector<std::uint8_t> mask(prefix.size(), 1);
    const auto logits = fw_.decode_logits(memory_, src_mask_, 1, src_len_, prefix, len, mask);
    const auto logp = tape_.log_softmax_rows(logits);
    const neural::Tensor<float>& lp = tape_.val(logp);
    std::vector<double> row(static_cast<std::size_t>(lp.dim(1)));
    for (neural::Index c = 0; c < lp.dim(1); ++c) {
      row[static_cast<std::size_t>(c)] = static_cast<double>(lp.at(len - 1, c));
    }
    return row;
  }

 private:
  TransformerConfig cfg_;
  neural::ParamStore<float>& params_;
  neural::Tape<float> tape_;
  SplitMix64 rng_{0};  // inference: dropout disabled, never drawn
  neural::ParamLease<float> lease_;
  TransformerForward<float> fw_;
  std::vector<std::uint8_t> src_mask_;
  int src_len_ = 0;
  typename neural::Tape<float>::Var memory_{};
  std::size_t base_ = 0;
};

Word truncate_word(const Word& w) {
  return w.size() > kMaxWordLen ? w.substr(0, kMaxWordLen) : w;
}

WindowSample truncated_sample(const WindowSample& s) {
  WindowSample out;
  out.left.reserve(s.left.size());
  for (const Word& w : s.left) out.left.push_back(truncate_word(w));
  out.right.reserve(s.right.size());
  for (const Word& w : s.right) out.right.push_back(truncate_word(w));
  out.target_corrupted = truncate_word(s.target_corrupted);
  out.label = s.label;
  return out;
}

}  // namespace

std::vector<TokenId> beam_decode(const Seq2SeqModel& model, const std::vector<TokenId>& source,
                                 int k, int max_len) {
  if (model.kind != ModelKind::transformer_corrector) {
    throw UsageError("beam decoding requires a corrector model, got " + kind_name(model.kind));
  }
  if (max_len > max_target_len() - 1) {
    throw UsageError("max decode length exceeds the positional table");
  }
  CorrectorScorer scorer(model, source);
  return beam_decode_scored(std::ref(scorer), CharVocab::instance().size(), CharVocab::kEos, k,
                            max_len);
}

TokenStream correct_tokens(const Seq2SeqModel& model, const TokenStream& stream, int window,
                           int beam_k, int threads) {
  if (model.kind != ModelKind::transformer_corrector) {
    throw UsageError("token correction requires a corrector model, got " + kind_name(model.kind));
  }
  if (window != model.tcfg.window) {
    throw UsageError("window mismatch: model trained with window " +
                     std::to_string(model.tcfg.window) + ", requested " + std::to_string(window));
  }
  if (threads < 1) throw UsageError("thread count must be >= 1");

  const CharVocab& vocab = CharVocab::instance();
  const std::vector<WindowSample> samples = sliding_windows(stream, window);
  std::vector<std::vector<TokenId>> encoded(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    encoded[i] = encode_window(truncated_sample(samples[i]), vocab, window);
  }

  // identical windows decode identically; memoize across the whole stream
  std::map<std::vector<TokenId>, Word> memo;
  std::mutex memo_mutex;
  std::vector<Word> out(samples.size());
  const int max_len = static_cast<int>(kMaxWordLen) + 4;

  auto decode_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      {
        std::lock_guard<std::mutex> lock(memo_mutex);
        auto it = memo.find(encoded[i]);
        if (it != memo.end()) {
          out[i] = it->second;
          continue;
        }
      }
      const std::vector<TokenId> ids = beam_decode(model, encoded[i], beam_k, max_len);
      Word word = decode_ids(ids, vocab);
      {
        std::lock_guard<std::mutex> lock(memo_mutex);
        memo.emplace(encoded[i], word);
      }
      out[i] = std::move(word);
    }
  };

  if (threads == 1 || samples.size() < 2) {
    decode_range(0, samples.size());
  } else {
    const std::size_t n = samples.size();
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(decode_range, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }

  TokenStream result;
  result.tokens = std::move(out);
  result.doc_boundaries = stream.doc_boundaries;
  return result;
}

}  // namespace ocrrestore
