#include "ocrrestore/errorgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ocrrestore/alphabet.hpp"
#include "ocrrestore/error.hpp"
#include "ocrrestore/log.hpp"
#include "ocrrestore/models_forward.hpp"

namespace ocrrestore {

Word random_errors(const Word& word, const NoiseConfig& cfg, RandomSource& rng) {
  if (word.empty()) throw DataError("cannot corrupt an empty word");
  if (!(cfg.noise_rate > 0.0 && cfg.noise_rate < 1.0)) {
    throw UsageError("noise rate must lie in (0,1)");
  }
  const Alphabet& alphabet = Alphabet::instance();
  const double fire_p = cfg.noise_rate * static_cast<double>(word.size());
  const bool fire_delete = rng.uniform() < fire_p;
  const bool fire_add = rng.uniform() < fire_p;
  const bool fire_replace = rng.uniform() < fire_p;

  Word w = word;
  if (fire_delete && !w.empty()) {
    w.erase(rng.below(w.size()), 1);
  }
  if (fire_add) {
    const std::size_t pos = rng.below(w.size() + 1);
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos),
             alphabet.letter(static_cast<int>(rng.below(Alphabet::kSize))));
  }
  if (fire_replace && !w.empty()) {
    // position before letter; a single expression would leave the draw
    // order to the compiler
    const std::size_t pos = rng.below(w.size());
    w[pos] = alphabet.letter(static_cast<int>(rng.below(Alphabet::kSize)));
  }
  return w;
}

namespace {

// pad/truncate ids to the prediction length
std::vector<TokenId> fit_length(std::vector<TokenId> ids, std::size_t len) {
  ids.resize(len, CharVocab::kPad);
  return ids;
}

double masked_ce(const neural::Tensor<double>& pred, const std::vector<TokenId>& ids) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] == CharVocab::kPad) continue;
    if (ids[t] < 0 || ids[t] >= pred.dim(1)) {
      throw DataError("token id out of range for the prediction vocabulary");
    }
    const double p = std::max(pred.at(static_cast<neural::Index>(t), ids[t]), kProbFloor);
    sum -= std::log(p);
    ++n;
  }
  if (n == 0) throw DataError("length mismatch: no unpadded positions to score");
  return sum / static_cast<double>(n);
}

}  // namespace

double anti_copy_loss(const neural::Tensor<double>& pred, std::vector<TokenId> target,
                      std::vector<TokenId> source) {
  neural::require(pred.ndim() == 2, "predictions must be [positions, vocab]");
  const std::size_t len = static_cast<std::size_t>(pred.dim(0));
  const double ce_target = masked_ce(pred, fit_length(std::move(target), len));
  const double ce_source = masked_ce(pred, fit_length(std::move(source), len));
  return ce_target + 1.0 / (ce_source + kAntiCopyEps);
}

EncodedBatch pack_generator_batch(const std::vector<ParallelPair>& pairs, std::size_t begin,
                                  std::size_t end) {
  const CharVocab& vocab = CharVocab::instance();
  std::vector<std::vector<TokenId>> sources, labels;
  sources.reserve(end - begin);
  labels.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    // generator direction: correct in, erroneous out
    const Word src_word =
        pairs[i].target.size() > kMaxWordLen ? pairs[i].target.substr(0, kMaxWordLen)
                                             : pairs[i].target;
    const Word tgt_word =
        pairs[i].source.size() > kMaxWordLen ? pairs[i].source.substr(0, kMaxWordLen)
                                             : pairs[i].source;
    std::vector<TokenId> src;
    src.reserve(src_word.size() + 1);
    for (char32_t c : src_word) src.push_back(vocab.id_of(c));
    src.push_back(CharVocab::kEos);
    sources.push_back(std::move(src));
    labels.push_back(encode_label(tgt_word, vocab));
  }
  return pack_batch(sources, labels);
}

Seq2SeqModel train_error_generator(const std::vector<ParallelPair>& pairs, const GruConfig& cfg,
                                   const TrainOptions& opts) {
  if (pairs.empty()) throw DataError("empty dataset: no pairs to train the generator on");
  Seq2SeqModel model = build_gru_generator(cfg);
  model.manifest.data_fingerprint = opts.data_fingerprint;

  SplitMix64 root(cfg.seed);
  neural::Adam<float> adam(static_cast<float>(cfg.lr));

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_mean = std::numeric_limits<double>::infinity();
  std::vector<float> best_params;
  int best_epoch = 0;
  int stall = 0;
  auto snapshot = [&]() {
    std::vector<float> snap;
    snap.reserve(static_cast<std::size_t>(model.params.total_params()));
    for (const auto& e : model.params.entries()) {
      snap.insert(snap.end(), e.value.data.begin(), e.value.data.end());
    }
    return snap;
  };
  best_params = snapshot();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    SplitMix64 epoch_rng = root.fork(static_cast<std::uint64_t>(1000 + epoch));
    // Fisher-Yates over pair order
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(epoch_rng.below(i))]);
    }
    std::vector<ParallelPair> shuffled;
    shuffled.reserve(pairs.size());
    for (std::size_t i : order) shuffled.push_back(pairs[i]);

    double loss_sum = 0.0;
    std::int64_t batch_count = 0;
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (std::size_t at = 0; at < shuffled.size(); at += bs) {
      const std::size_t hi = std::min(shuffled.size(), at + bs);
      const EncodedBatch b = pack_generator_batch(shuffled, at, hi);
      neural::Tape<float> tape;
      neural::ParamLease<float> lease(tape, model.params, true);
      GruForward<float> fw{&tape, &lease, &cfg};
      const auto loss = fw.anti_copy_batch_loss(b, cfg.teacher_forcing, epoch_rng,
                                                static_cast<float>(kAntiCopyEps));
      tape.backward(loss);
      model.params.zero_grads();
      lease.harvest();
      adam.step(model.params);
      loss_sum += static_cast<double>(tape.val(loss).at(0));
      ++batch_count;
    }
    const double mean = batch_count > 0 ? loss_sum / static_cast<double>(batch_count) : 0.0;
    model.manifest.loss_history.push_back(mean);
    log::info("generator epoch " + std::to_string(epoch) + "/" + std::to_string(cfg.max_epochs) +
              " mean loss " + std::to_string(mean));

    if (mean < best_mean) {
      const double improvement = best_mean - mean;
      best_mean = mean;
      best_params = snapshot();
      best_epoch = epoch;
      stall = std::isfinite(improvement) && improvement < opts.min_improve ? stall + 1 : 0;
    } else {
      ++stall;
    }
    if (stall >= opts.patience) {
      log::info("generator converged after " + std::to_string(epoch) + " epochs");
      break;
    }
  }
  std::size_t off = 0;
  for (auto& e : model.params.entries()) {
    std::copy(best_params.begin() + static_cast<std::ptrdiff_t>(off),
              best_params.begin() + static_cast<std::ptrdiff_t>(off + e.value.data.size()),
              e.value.data.begin());
    off += e.value.data.size();
  }
  model.manifest.best_epoch = best_epoch;
  model.manifest.checkpoint_policy = "best_epoch_mean_loss";
  return model;
}

GeneratedError generate_error(const Seq2SeqModel& model, const Word& word, RandomSource& rng,
                              bool greedy) {
  if (model.kind != ModelKind::gru_generator) {
    throw UsageError("error generation requires a generator model, got " + kind_name(model.kind));
  }
  const CharVocab& vocab = CharVocab::instance();
  if (!Alphabet::instance().all_in(word) || word.empty()) {
    throw DataError("generator input must be a nonempty alphabet-only word");
  }
  const Word clipped = word.size() > kMaxWordLen ? word.substr(0, kMaxWordLen) : word;

  neural::Tape<float> tape;
  neural::ParamStore<float>& params = const_cast<neural::ParamStore<float>&>(model.params);
  neural::ParamLease<float> lease(tape, params, false);
  GruForward<float> fw{&tape, &lease, &model.gcfg};

  std::vector<TokenId> src;
  src.reserve(clipped.size() + 1);
  for (char32_t c : clipped) src.push_back(vocab.id_of(c));
  src.push_back(CharVocab::kEos);
  const std::vector<std::uint8_t> src_mask(src.size(), 1);
  const auto context = fw.encode_context(src, 1, static_cast<int>(src.size()), src_mask);

  // sampling support: the 29 letters plus <eos>
  std::vector<TokenId> support;
  support.reserve(static_cast<std::size_t>(Alphabet::kSize) + 1);
  support.push_back(CharVocab::kEos);
  for (int i = 0; i < Alphabet::kSize; ++i) {
    support.push_back(vocab.id_of(Alphabet::instance().letter(i)));
  }

  auto h = context;
  std::vector<TokenId> prev{CharVocab::kSos};
  Word out;
  const std::size_t max_chars = clipped.size() + 4;
  for (std::size_t step = 0; step < max_chars; ++step) {
    const auto res = fw.decode_step(context, h, prev);
    h = res.h;
    const neural::Tensor<float>& logits = tape.val(res.logits);
    double mx = -std::numeric_limits<double>::infinity();
    for (TokenId id : support) mx = std::max(mx, static_cast<double>(logits.at(0, id)));
    double z = 0.0;
    for (TokenId id : support) z += std::exp(static_cast<double>(logits.at(0, id)) - mx);

    TokenId picked = support.front();
    if (greedy) {
      for (TokenId id : support) {
        if (logits.at(0, id) > logits.at(0, picked)) picked = id;
      }
    } else {
      double u = rng.uniform() * z;
      for (TokenId id : support) {
        u -= std::exp(static_cast<double>(logits.at(0, id)) - mx);
        picked = id;
        if (u <= 0.0) break;
      }
    }
    if (picked == CharVocab::kEos) break;
    out.push_back(vocab.char_of(picked));
    prev[0] = picked;
  }
  if (out.empty()) {
    return GeneratedError{word, true};
  }
  return GeneratedError{out, false};
}

}  // namespace ocrrestore
