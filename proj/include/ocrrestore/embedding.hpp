#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ocrrestore/corpus.hpp"
#include "ocrrestore/neural/tensor.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

struct SgnsConfig {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  int min_count = 5;
  double learning_rate = 0.025;  // linearly decayed to 1e-4 of itself
  std::uint64_t seed = 1;
};

// Word vectors with a frequency-cutoff vocabulary. `vectors` holds the input
// (center-word) embeddings, one row per vocab index; indices are assigned by
// descending corpus frequency, ties by word order, so results are
// reproducible.
struct EmbeddingModel {
  std::vector<Word> words;
  std::unordered_map<Word, int> index;
  neural::Tensor<float> vectors;
  int dim = 0;
  std::vector<double> epoch_losses;  // mean pair loss per epoch

  bool has(const Word& w) const { return index.count(w) > 0; }
  int index_of(const Word& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

// Skip-gram with negative sampling over the token stream. Context windows do
// not cross document boundaries. Deterministic for a fixed seed.
EmbeddingModel train_sgns(const TokenStream& stream, const SgnsConfig& cfg);

// Top-k neighbors by cosine similarity, query excluded, ties broken by
// ascending vocabulary index. k is clamped to |V|-1.
std::vector<std::pair<Word, double>> most_similar(const EmbeddingModel& model, const Word& word,
                                                  int k);

// Neighbor table: word -> ranked (neighbor, cosine) list. The TSV form
// (`word<TAB>neighbor<TAB>score`, one neighbor per line, rank order preserved)
// lets externally trained embeddings replace in-repo training.
using NeighborTable = std::map<Word, std::vector<std::pair<Word, double>>>;

NeighborTable neighbor_table(const EmbeddingModel& model, const std::vector<Word>& queries, int k);
void write_neighbors_tsv(const std::string& path, const NeighborTable& table);
NeighborTable load_neighbors_tsv(const std::string& path);

}  // namespace ocrrestore
