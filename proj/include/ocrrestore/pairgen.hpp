#pragma once

#include <set>
#include <string>
#include <vector>

#include "ocrrestore/embedding.hpp"
#include "ocrrestore/lexicon.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

// One unsupervised training example: an erroneous form and a correct form.
struct ParallelPair {
  Word source;  // erroneous
  Word target;  // correct
  bool operator<(const ParallelPair& o) const {
    return source != o.source ? source < o.source : target < o.target;
  }
  bool operator==(const ParallelPair& o) const {
    return source == o.source && target == o.target;
  }
};

struct ExtractionConfig {
  int neighbors_k = 10;
  int max_edit_distance = 4;
  int min_word_len = 3;
  // When set, error words pair only with their anchor word instead of the
  // full Cartesian error-set x correct-set within the distance cap.
  bool anchor_only = false;
};

// Vocabulary words the lexicon accepts; these anchor the neighbor queries.
std::set<Word> build_correct_list(const EmbeddingModel& model, const Lexicon& lex);

// For each anchor: fetch its nearest neighbors, split them into correct
// (lexicon-valid, plus the anchor itself) and erroneous groups, and emit
// every (error, correct) pair within the edit-distance cap. Deduplicated,
// sorted output.
std::vector<ParallelPair> extract_pairs(const EmbeddingModel& model, const std::set<Word>& correct,
                                        const Lexicon& lex, const ExtractionConfig& cfg);

// Same extraction driven by a precomputed neighbor table (external
// embeddings path). Anchors missing from the table contribute nothing.
std::vector<ParallelPair> extract_pairs(const NeighborTable& neighbors,
                                        const std::set<Word>& correct, const Lexicon& lex,
                                        const ExtractionConfig& cfg);

// TSV `source<TAB>target`, one pair per line, UTF-8.
void write_pairs_tsv(const std::string& path, const std::vector<ParallelPair>& pairs);
std::vector<ParallelPair> load_pairs_tsv(const std::string& path);

}  // namespace ocrrestore
