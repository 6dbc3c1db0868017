#pragma once

#include <cstdint>
#include <vector>

#include "ocrrestore/models.hpp"
#include "ocrrestore/neural/tensor.hpp"
#include "ocrrestore/pairgen.hpp"
#include "ocrrestore/rng.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

struct NoiseConfig {
  double noise_rate = 0.07;
  std::uint64_t seed = 1;
};

// Stochastic corruption: for each action in the fixed order delete, add,
// replace, one uniform draw decides whether it fires with probability
// min(1, noise_rate * len(word)) — all three firing draws happen up front
// against the original length, then the fired actions apply in order on the
// mutating word. At most one edit per action. Inserted/replacement letters
// are uniform over the alphabet.
Word random_errors(const Word& word, const NoiseConfig& cfg, RandomSource& rng);

// Probability floor keeping cross-entropy of exact one-hot rows finite, so
// the closed-form loss examples are computable.
constexpr double kProbFloor = 1e-12;
constexpr double kAntiCopyEps = 1e-8;

// CE(pred, target) + 1 / (CE(pred, source) + eps) where pred rows are
// probability distributions over the character vocabulary. target and
// source are padded/truncated to the prediction length with <pad>; pad
// positions are masked out of their own CE term.
double anti_copy_loss(const neural::Tensor<double>& pred, std::vector<TokenId> target,
                      std::vector<TokenId> source);

// Trains the GRU generator on (correct -> error) pairs — pairgen output
// reversed — with the anti-copy objective and per-character teacher forcing.
Seq2SeqModel train_error_generator(const std::vector<ParallelPair>& pairs, const GruConfig& cfg,
                                   const TrainOptions& opts = {});

struct GeneratedError {
  Word word;
  bool degenerate = false;  // decode produced nothing; input returned instead
};

// Samples one corruption: per-step multinomial at temperature 1.0 over the
// alphabet letters plus <eos> (greedy = argmax over the same support),
// output length capped at len(word) + 4.
GeneratedError generate_error(const Seq2SeqModel& model, const Word& word, RandomSource& rng,
                              bool greedy = false);

// Encodes generator training pairs: sources are `chars <eos>`, labels are
// `<sos> chars <eos>`, both padded.
EncodedBatch pack_generator_batch(const std::vector<ParallelPair>& pairs, std::size_t begin,
                                  std::size_t end);

}  // namespace ocrrestore
