#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ocrrestore/alphabet.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

// Alphabet-only word stream. doc_boundaries holds one-past-the-end token
// indices of each document, strictly increasing; the last entry equals
// tokens.size() for a nonempty stream.
struct TokenStream {
  std::vector<Word> tokens;
  std::vector<std::size_t> doc_boundaries;

  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
};

// One GT-table row: ground truth plus the word each OCR engine produced.
struct AlignedRow {
  Word gt;
  std::map<std::string, Word> ocr;  // keyed by TESSERACT / OLD / FR11
};

struct GtTable {
  std::vector<AlignedRow> rows;
  std::size_t dropped_non_alphabet = 0;
  std::size_t dropped_blank = 0;
  std::size_t malformed = 0;  // wrong column count, skipped with a warning
};

// Window of context words around one target token. target_corrupted starts
// as the token itself; training loaders overwrite it with a noisy form.
struct WindowSample {
  std::vector<Word> left;
  Word target_corrupted;
  std::vector<Word> right;
  Word label;
};

// Lowercases, deletes non-alphabet characters in place, splits on
// whitespace and drops tokens emptied by deletion. A blank line ends the
// current document.
TokenStream clean_text(const std::string& raw, const Alphabet& alphabet = Alphabet::instance());

// Single word through the same fold-and-filter rule.
Word clean_word(const Word& word, const Alphabet& alphabet = Alphabet::instance());

inline const std::vector<std::string>& gt_engines() {
  static const std::vector<std::string> engines = {"TESSERACT", "OLD", "FR11"};
  return engines;
}

// Reads a delimiter-separated table with a header row naming GT, TESSERACT,
// OLD and FR11 columns. Rows with any blank cell or any non-alphabet
// character (after case folding) are dropped; rows with the wrong column
// count are counted and skipped.
GtTable load_gt_table(const std::string& path, char delimiter = ',');

// One sample per token; the window never crosses a document boundary and
// context missing at document edges is simply absent.
std::vector<WindowSample> sliding_windows(const TokenStream& stream, int window);

// Token-stream files: one token per line, UTF-8, blank line between
// documents. The output of `clean` round-trips through this format.
TokenStream read_token_file(const std::string& path);
void write_token_file(const TokenStream& stream, const std::string& path);

}  // namespace ocrrestore
