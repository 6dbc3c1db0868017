#include "ocrrestore/pairgen.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "ocrrestore/error.hpp"

namespace ocrrestore {

namespace {

using NeighborFn = std::function<std::vector<std::pair<Word, double>>(const Word&)>;

std::vector<ParallelPair> extract_impl(const NeighborFn& neighbors_of,
                                       const std::set<Word>& correct, const Lexicon& lex,
                                       const ExtractionConfig& cfg) {
  if (correct.empty()) throw DataError("correct-word list is empty; nothing to anchor on");
  if (cfg.neighbors_k < 1) throw UsageError("neighbors_k must be >= 1");
  if (cfg.max_edit_distance < 1) throw UsageError("max_edit_distance must be >= 1");

  std::set<ParallelPair> out;
  for (const Word& anchor : correct) {
    const auto neighbors = neighbors_of(anchor);
    if (neighbors.empty()) continue;
    std::vector<Word> valid{anchor};
    std::vector<Word> errors;
    for (const auto& [n, score] : neighbors) {
      (lex.is_valid(n) ? valid : errors).push_back(n);
    }
    if (cfg.anchor_only) valid = {anchor};
    for (const Word& e : errors) {
      if (static_cast<int>(e.size()) < cfg.min_word_len) continue;
      for (const Word& c : valid) {
        if (static_cast<int>(c.size()) < cfg.min_word_len) continue;
        if (e == c) continue;
        if (levenshtein(e, c) > static_cast<std::size_t>(cfg.max_edit_distance)) continue;
        out.insert(ParallelPair{e, c});
      }
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace

std::set<Word> build_correct_list(const EmbeddingModel& model, const Lexicon& lex) {
  if (model.words.empty()) throw DataError("embedding model has an empty vocabulary");
  std::set<Word> out;
  for (const Word& w : model.words) {
    if (lex.is_valid(w)) out.insert(w);
  }
  return out;
}

std::vector<ParallelPair> extract_pairs(const EmbeddingModel& model, const std::set<Word>& correct,
                                        const Lexicon& lex, const ExtractionConfig& cfg) {
  return extract_impl(
      [&](const Word& anchor) -> std::vector<std::pair<Word, double>> {
        if (!model.has(anchor)) return {};
        return most_similar(model, anchor, cfg.neighbors_k);
      },
      correct, lex, cfg);
}

std::vector<ParallelPair> extract_pairs(const NeighborTable& neighbors,
                                        const std::set<Word>& correct, const Lexicon& lex,
                                        const ExtractionConfig& cfg) {
  return extract_impl(
      [&](const Word& anchor) -> std::vector<std::pair<Word, double>> {
        auto it = neighbors.find(anchor);
        if (it == neighbors.end()) return {};
        auto list = it->second;
        if (static_cast<int>(list.size()) > cfg.neighbors_k) {
          list.resize(static_cast<std::size_t>(cfg.neighbors_k));
        }
        return list;
      },
      correct, lex, cfg);
}

void write_pairs_tsv(const std::string& path, const std::vector<ParallelPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write pairs file: " + path);
  std::ostringstream buf;
  for (const ParallelPair& p : pairs) {
    buf << utf8_encode(p.source) << '\t' << utf8_encode(p.target) << '\n';
  }
  out << buf.str();
  if (!out) throw DataError("failed while writing pairs file: " + path);
}

std::vector<ParallelPair> load_pairs_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read pairs file: " + path);
  std::vector<ParallelPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("malformed pair line " + std::to_string(lineno) + " in " + path);
    }
    ParallelPair p{utf8_decode(line.substr(0, tab)), utf8_decode(line.substr(tab + 1))};
    if (p.source.empty() || p.target.empty()) {
      throw DataError("empty word in pair line " + std::to_string(lineno) + " in " + path);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace ocrrestore
