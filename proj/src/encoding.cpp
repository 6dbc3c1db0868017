#include "ocrrestore/encoding.hpp"

#include <algorithm>
#include <numeric>

#include "ocrrestore/error.hpp"
#include "ocrrestore/log.hpp"

namespace ocrrestore {

TokenId CharVocab::id_of(char32_t c) const {
  const auto index = Alphabet::instance().index_of(c);
  if (!index) throw DataError("character outside the alphabet: '" + utf8_encode(Word(1, c)) + "'");
  return kNumSpecials + static_cast<TokenId>(*index);
}

char32_t CharVocab::char_of(TokenId id) const {
  if (id < kNumSpecials || id >= size()) {
    throw DataError("id " + std::to_string(id) + " is not an alphabet character");
  }
  return Alphabet::instance().letter(id - kNumSpecials);
}

std::string CharVocab::name_of(TokenId id) const {
  switch (id) {
    case kSos: return "<sos>";
    case kEos: return "<eos>";
    case kSep: return "<sep>";
    case kCtx: return "<ctx>";
    case kPad: return "<pad>";
    default: return utf8_encode(Word(1, char_of(id)));
  }
}

namespace {

void append_word(std::vector<TokenId>& out, const Word& word, const CharVocab& vocab) {
  for (char32_t c : word) out.push_back(vocab.id_of(c));
}

void append_context(std::vector<TokenId>& out, const std::vector<Word>& words, const CharVocab& vocab) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out.push_back(CharVocab::kSep);
    append_word(out, words[i], vocab);
  }
}

}  // namespace

std::vector<TokenId> encode_window(const WindowSample& sample, const CharVocab& vocab, int window) {
  if (window < 1 || window % 2 == 0) {
    throw UsageError("window size must be an odd positive integer, got " + std::to_string(window));
  }
  std::vector<TokenId> out;
  out.push_back(CharVocab::kSos);
  if (window == 1) {
    append_word(out, sample.target_corrupted, vocab);
  } else {
    append_context(out, sample.left, vocab);
    out.push_back(CharVocab::kCtx);
    append_word(out, sample.target_corrupted, vocab);
    out.push_back(CharVocab::kCtx);
    append_context(out, sample.right, vocab);
  }
  out.push_back(CharVocab::kEos);
  return out;
}

std::vector<TokenId> encode_label(const Word& word, const CharVocab& vocab) {
  std::vector<TokenId> out;
  out.reserve(word.size() + 2);
  out.push_back(CharVocab::kSos);
  append_word(out, word, vocab);
  out.push_back(CharVocab::kEos);
  return out;
}

Word decode_ids(const std::vector<TokenId>& ids, const CharVocab& vocab) {
  Word out;
  for (TokenId id : ids) {
    if (!vocab.in_range(id)) throw DataError("unknown token id " + std::to_string(id));
    if (id == CharVocab::kEos) break;
    if (vocab.is_special(id)) continue;
    out.push_back(vocab.char_of(id));
  }
  return out;
}

EncodedBatch pack_batch(const std::vector<std::vector<TokenId>>& sources,
                        const std::vector<std::vector<TokenId>>& labels) {
  EncodedBatch batch;
  batch.batch = static_cast<int>(sources.size());
  for (const auto& row : sources) batch.src_len = std::max(batch.src_len, static_cast<int>(row.size()));
  for (const auto& row : labels) batch.tgt_len = std::max(batch.tgt_len, static_cast<int>(row.size()));

  batch.sources.assign(static_cast<std::size_t>(batch.batch) * batch.src_len, CharVocab::kPad);
  batch.labels.assign(static_cast<std::size_t>(batch.batch) * batch.tgt_len, CharVocab::kPad);
  batch.src_mask.assign(batch.sources.size(), 0);
  batch.tgt_mask.assign(batch.labels.size(), 0);

  for (int b = 0; b < batch.batch; ++b) {
    const auto& src = sources[static_cast<std::size_t>(b)];
    for (std::size_t t = 0; t < src.size(); ++t) {
      batch.sources[static_cast<std::size_t>(b) * batch.src_len + t] = src[t];
      batch.src_mask[static_cast<std::size_t>(b) * batch.src_len + t] = 1;
    }
    const auto& tgt = labels[static_cast<std::size_t>(b)];
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      batch.labels[static_cast<std::size_t>(b) * batch.tgt_len + t] = tgt[t];
      batch.tgt_mask[static_cast<std::size_t>(b) * batch.tgt_len + t] = 1;
    }
  }
  return batch;
}

DynamicBatcher::DynamicBatcher(const TokenStream& stream, int window, Corruptor corruptor, int batch_size)
    : window_(window), corruptor_(std::move(corruptor)), batch_size_(batch_size) {
  if (stream.empty()) throw DataError("cannot batch an empty token stream");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  samples_ = sliding_windows(stream, window);
  for (WindowSample& sample : samples_) {
    if (sample.label.size() > kMaxWordLen) {
      sample.label.resize(kMaxWordLen);
      sample.target_corrupted = sample.label;
      ++truncated_;
    }
    for (std::vector<Word>* side : {&sample.left, &sample.right}) {
      for (Word& word : *side) {
        if (word.size() > kMaxWordLen) {
          word.resize(kMaxWordLen);
          ++truncated_;
        }
      }
    }
  }
  if (truncated_ > 0) {
    log::warn("dynamic loader truncated " + std::to_string(truncated_) + " over-long words to " +
              std::to_string(kMaxWordLen) + " characters");
  }
}

std::vector<EncodedBatch> DynamicBatcher::make_epoch(RandomSource& rng) const {
  const CharVocab& vocab = CharVocab::instance();

  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) {  // Fisher-Yates from the batch rng
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  std::vector<EncodedBatch> batches;
  std::vector<std::vector<TokenId>> sources;
  std::vector<std::vector<TokenId>> labels;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const WindowSample& base = samples_[order[k]];
    WindowSample sample = base;
    sample.target_corrupted = corruptor_(base.label, rng);
    // A corrupted form may outgrow the clean cap, but the encoded row must
    // stay within max_source_len(window); +2 is the exact fit at window 5.
    if (sample.target_corrupted.size() > kMaxWordLen + 2) {
      sample.target_corrupted.resize(kMaxWordLen + 2);
    }
    sources.push_back(encode_window(sample, vocab, window_));
    labels.push_back(encode_label(sample.label, vocab));
    if (static_cast<int>(sources.size()) == batch_size_ || k + 1 == order.size()) {
      batches.push_back(pack_batch(sources, labels));
      sources.clear();
      labels.clear();
    }
  }
  return batches;
}

}  // namespace ocrrestore
