#include "ocrrestore/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <vector>

#include "ocrrestore/error.hpp"
#include "ocrrestore/log.hpp"

namespace ocrrestore {

Lexicon load_wordlist(const std::string& path, const Alphabet& alphabet) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wordlist: " + path);

  std::unordered_set<Word> words;
  std::size_t dropped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Word word = utf8_decode(line);
    for (char32_t& c : word) c = fold_lower(c);
    if (!alphabet.all_in(word)) {
      ++dropped;
      continue;
    }
    words.insert(std::move(word));
  }
  if (dropped > 0) {
    log::warn("wordlist " + path + ": dropped " + std::to_string(dropped) + " non-alphabet lines");
  }
  if (words.empty()) throw DataError("wordlist has no valid entries: " + path);
  return Lexicon(std::move(words), path);
}

std::size_t levenshtein(const Word& a, const Word& b) {
  const Word& shorter = a.size() <= b.size() ? a : b;
  const Word& longer = a.size() <= b.size() ? b : a;
  const std::size_t n = shorter.size();

  std::vector<std::size_t> row(n + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});

  for (std::size_t i = 1; i <= longer.size(); ++i) {
    std::size_t diag = row[0];  // row[i-1][0]
    row[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t above = row[j];
      const std::size_t sub = diag + (longer[i - 1] == shorter[j - 1] ? 0 : 1);
      row[j] = std::min({above + 1, row[j - 1] + 1, sub});
      diag = above;
    }
  }
  return row[n];
}

}  // namespace ocrrestore
