#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>

#include "ocrrestore/alphabet.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

// Surface-form word-validity oracle. Stands in for a morphological
// analyzer: a word is valid iff its exact surface form is listed.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::unordered_set<Word> words, std::string source)
      : words_(std::move(words)), source_(std::move(source)) {}

  bool is_valid(const Word& word) const { return words_.count(word) > 0; }
  std::size_t size() const { return words_.size(); }
  const std::string& source() const { return source_; }
  const std::unordered_set<Word>& words() const { return words_; }

 private:
  std::unordered_set<Word> words_;
  std::string source_;
};

// Loads one word per line, lowercased; lines with non-alphabet characters
// are dropped with a warning count. Throws DataError on a missing file or
// when no valid entries remain.
Lexicon load_wordlist(const std::string& path, const Alphabet& alphabet = Alphabet::instance());

// Minimum number of single-character insertions, deletions and
// substitutions turning a into b. One Unicode scalar = one edit unit.
// O(|a|*|b|) time, O(min(|a|,|b|)) space.
std::size_t levenshtein(const Word& a, const Word& b);

}  // namespace ocrrestore
