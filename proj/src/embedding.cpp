#include "ocrrestore/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ocrrestore/error.hpp"
#include "ocrrestore/log.hpp"
#include "ocrrestore/rng.hpp"

namespace ocrrestore {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// index into the unigram^0.75 cumulative table
int sample_negative(const std::vector<double>& cdf, RandomSource& rng) {
  const double u = rng.uniform() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<int>(it - cdf.begin());
}

}  // namespace

EmbeddingModel train_sgns(const TokenStream& stream, const SgnsConfig& cfg) {
  if (stream.tokens.empty()) throw DataError("cannot train embeddings on an empty token stream");
  if (cfg.dim < 2) throw UsageError("embedding dim must be >= 2");
  if (cfg.negatives < 1) throw UsageError("negatives must be >= 1");
  if (cfg.min_count < 1) throw UsageError("min_count must be >= 1");

  std::map<Word, std::int64_t> counts;
  for (const Word& w : stream.tokens) ++counts[w];

  // vocab order: count desc, then word asc (map iteration already word-asc)
  std::vector<std::pair<Word, std::int64_t>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= cfg.min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.empty()) {
    throw DataError("empty vocabulary: no word reaches min_count=" + std::to_string(cfg.min_count));
  }

  EmbeddingModel model;
  model.dim = cfg.dim;
  model.words.reserve(kept.size());
  for (const auto& [w, c] : kept) {
    model.index[w] = static_cast<int>(model.words.size());
    model.words.push_back(w);
  }
  const int v = static_cast<int>(model.words.size());
  const int d = cfg.dim;

  SplitMix64 rng(cfg.seed);
  model.vectors = neural::Tensor<float>({v, d});
  for (float& x : model.vectors.data) {
    x = static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(d));
  }
  std::vector<float> syn1(static_cast<std::size_t>(v) * static_cast<std::size_t>(d), 0.0f);

  std::vector<double> cdf(static_cast<std::size_t>(v));
  double acc = 0.0;
  for (int i = 0; i < v; ++i) {
    acc += std::pow(static_cast<double>(kept[static_cast<std::size_t>(i)].second), 0.75);
    cdf[static_cast<std::size_t>(i)] = acc;
  }

  // center positions drive the lr decay schedule
  std::int64_t in_vocab = 0;
  for (const Word& w : stream.tokens) {
    if (model.has(w)) ++in_vocab;
  }
  const double total = static_cast<double>(in_vocab) * cfg.epochs + 1.0;
  const double lr0 = cfg.learning_rate;
  std::int64_t processed = 0;

  std::vector<double> grad_in(static_cast<std::size_t>(d));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::int64_t epoch_pairs = 0;
    std::size_t begin = 0;
    for (std::size_t boundary : stream.doc_boundaries) {
      for (std::size_t pos = begin; pos < boundary; ++pos) {
        const int center = model.index_of(stream.tokens[pos]);
        if (center < 0) continue;
        const double lr =
            std::max(lr0 * 1e-4, lr0 * (1.0 - static_cast<double>(processed) / total));
        ++processed;
        float* vc = &model.vectors.at(center, 0);
        for (int off = -cfg.window; off <= cfg.window; ++off) {
          if (off == 0) continue;
          const std::int64_t ctx_pos = static_cast<std::int64_t>(pos) + off;
          if (ctx_pos < static_cast<std::int64_t>(begin) ||
              ctx_pos >= static_cast<std::int64_t>(boundary)) {
            continue;
          }
          const int ctx = model.index_of(stream.tokens[static_cast<std::size_t>(ctx_pos)]);
          if (ctx < 0) continue;

          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          double pair_loss = 0.0;
          for (int n = 0; n <= cfg.negatives; ++n) {
            int tgt;
            double label;
            if (n == 0) {
              tgt = ctx;
              label = 1.0;
            } else {
              tgt = sample_negative(cdf, rng);
              if (tgt == ctx) continue;  // skip accidental positives
              label = 0.0;
            }
            float* vt = &syn1[static_cast<std::size_t>(tgt) * static_cast<std::size_t>(d)];
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += static_cast<double>(vc[j]) * vt[j];
            const double p = sigmoid(dot);
            pair_loss -= label > 0.5 ? std::log(std::max(p, 1e-12))
                                     : std::log(std::max(1.0 - p, 1e-12));
            const double g = (label - p) * lr;
            for (int j = 0; j < d; ++j) {
              grad_in[static_cast<std::size_t>(j)] += g * vt[j];
              vt[j] += static_cast<float>(g * vc[j]);
            }
          }
          for (int j = 0; j < d; ++j) vc[j] += static_cast<float>(grad_in[static_cast<std::size_t>(j)]);
          epoch_loss += pair_loss;
          ++epoch_pairs;
        }
      }
      begin = boundary;
    }
    const double mean = epoch_pairs > 0 ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0;
    model.epoch_losses.push_back(mean);
    log::info("sgns epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
              " mean loss " + std::to_string(mean));
  }
  return model;
}

std::vector<std::pair<Word, double>> most_similar(const EmbeddingModel& model, const Word& word,
                                                  int k) {
  if (k < 1) throw UsageError("neighbor count must be >= 1");
  const int q = model.index_of(word);
  if (q < 0) throw DataError("unknown word in embedding vocabulary: " + utf8_encode(word));
  const int v = static_cast<int>(model.words.size());
  const int d = model.dim;

  std::vector<double> norms(static_cast<std::size_t>(v), 0.0);
  for (int i = 0; i < v; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double x = model.vectors.at(i, j);
      s += x * x;
    }
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }

  std::vector<std::pair<double, int>> scored;  // (-cos used implicitly via comparator)
  scored.reserve(static_cast<std::size_t>(v) - 1);
  for (int i = 0; i < v; ++i) {
    if (i == q) continue;
    double dot = 0.0;
    for (int j = 0; j < d; ++j) {
      dot += static_cast<double>(model.vectors.at(q, j)) * model.vectors.at(i, j);
    }
    const double denom = norms[static_cast<std::size_t>(q)] * norms[static_cast<std::size_t>(i)];
    const double cos = denom > 0.0 ? dot / denom : 0.0;
    scored.emplace_back(cos, i);
  }
  // sort by similarity desc, ties by vocab index asc
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  std::vector<std::pair<Word, double>> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.emplace_back(model.words[static_cast<std::size_t>(scored[i].second)], scored[i].first);
  }
  return out;
}

NeighborTable neighbor_table(const EmbeddingModel& model, const std::vector<Word>& queries,
                             int k) {
  NeighborTable table;
  for (const Word& w : queries) {
    if (!model.has(w)) continue;
    table[w] = most_similar(model, w, k);
  }
  return table;
}

void write_neighbors_tsv(const std::string& path, const NeighborTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write neighbor file: " + path);
  std::ostringstream buf;
  buf.precision(17);
  for (const auto& [w, neighbors] : table) {
    for (const auto& [n, score] : neighbors) {
      buf << utf8_encode(w) << '\t' << utf8_encode(n) << '\t' << score << '\n';
    }
  }
  out << buf.str();
  if (!out) throw DataError("failed while writing neighbor file: " + path);
}

NeighborTable load_neighbors_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read neighbor file: " + path);
  NeighborTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError("malformed neighbor line " + std::to_string(lineno) + " in " + path);
    }
    const Word w = utf8_decode(line.substr(0, t1));
    const Word n = utf8_decode(line.substr(t1 + 1, t2 - t1 - 1));
    double score = 0.0;
    try {
      score = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw DataError("bad neighbor score on line " + std::to_string(lineno) + " in " + path);
    }
    table[w].emplace_back(n, score);
  }
  return table;
}

}  // namespace ocrrestore
