#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ocrrestore/alphabet.hpp"
#include "ocrrestore/corpus.hpp"
#include "ocrrestore/rng.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

using TokenId = std::int32_t;

// Character vocabulary shared by both models: five special tokens with
// fixed ids, then the 29 alphabet letters in order. Deterministic by
// construction.
class CharVocab {
 public:
  static constexpr TokenId kSos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kCtx = 3;
  static constexpr TokenId kPad = 4;
  static constexpr int kNumSpecials = 5;

  static const CharVocab& instance() {
    static const CharVocab vocab;
    return vocab;
  }

  int size() const { return kNumSpecials + Alphabet::kSize; }

  // Id of an alphabet character. Throws DataError for anything else.
  TokenId id_of(char32_t c) const;
  // Letter for an alphabet-character id. Throws DataError for special or
  // out-of-range ids.
  char32_t char_of(TokenId id) const;

  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }
  bool in_range(TokenId id) const { return id >= 0 && id < size(); }

  // Symbol names as used in textual dumps: <sos> <eos> <sep> <ctx> <pad>.
  std::string name_of(TokenId id) const;

 private:
  CharVocab() = default;
};

// <sos> [left words, <sep>-separated] <ctx> target <ctx> [right words] <eos>
// for window >= 3; window 1 is just <sos> target <eos>. Absent context
// sides collapse to nothing between <sos>/<ctx> markers.
std::vector<TokenId> encode_window(const WindowSample& sample, const CharVocab& vocab, int window);

// <sos> characters <eos>.
std::vector<TokenId> encode_label(const Word& word, const CharVocab& vocab);

// Strips special tokens, stops at the first <eos>. Throws DataError on
// out-of-range ids.
Word decode_ids(const std::vector<TokenId>& ids, const CharVocab& vocab);

// Padded id matrices for one mini-batch. Every row starts with <sos> and
// holds exactly one <eos>; pads only follow the <eos>.
struct EncodedBatch {
  int batch = 0;
  int src_len = 0;
  int tgt_len = 0;
  std::vector<TokenId> sources;  // batch x src_len, row-major
  std::vector<TokenId> labels;   // batch x tgt_len, row-major
  std::vector<std::uint8_t> src_mask;  // 1 = real token, 0 = pad
  std::vector<std::uint8_t> tgt_mask;

  TokenId src(int b, int t) const { return sources[static_cast<std::size_t>(b) * src_len + t]; }
  TokenId tgt(int b, int t) const { return labels[static_cast<std::size_t>(b) * tgt_len + t]; }
};

// Produces a fresh corruption of a clean word; called once per sample per
// epoch by the dynamic loader.
using Corruptor = std::function<Word(const Word&, RandomSource&)>;

// Tokens longer than this are truncated (with a warning count) before
// encoding; bounds the positional table.
constexpr std::size_t kMaxWordLen = 30;

// Maximum encoded source length for a window of n words.
constexpr int max_source_len(int window) { return window * static_cast<int>(kMaxWordLen) + 8; }
constexpr int max_target_len() { return static_cast<int>(kMaxWordLen) + 2 + 6; }

// Dynamic data loader: every epoch re-corrupts each target word freshly,
// shuffles sample order and packs padded batches. Context words stay clean.
class DynamicBatcher {
 public:
  DynamicBatcher(const TokenStream& stream, int window, Corruptor corruptor, int batch_size);

  // One epoch of batches, freshly corrupted and shuffled from rng.
  std::vector<EncodedBatch> make_epoch(RandomSource& rng) const;

  std::size_t num_samples() const { return samples_.size(); }
  int window() const { return window_; }
  std::size_t truncated_words() const { return truncated_; }

 private:
  std::vector<WindowSample> samples_;
  int window_;
  Corruptor corruptor_;
  int batch_size_;
  std::size_t truncated_ = 0;
};

// Packs already-encoded rows into one padded batch.
EncodedBatch pack_batch(const std::vector<std::vector<TokenId>>& sources,
                        const std::vector<std::vector<TokenId>>& labels);

}  // namespace ocrrestore
