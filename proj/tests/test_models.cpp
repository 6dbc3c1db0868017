#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "ocrrestore/encoding.hpp"
#include "ocrrestore/error.hpp"
#include "ocrrestore/models.hpp"
#include "ocrrestore/rng.hpp"

using namespace ocrrestore;

namespace {

// Deterministic pseudo-random scorer: the log-probability row for a prefix
// depends only on the prefix contents. Rows are proper log-distributions.
StepScorer hashed_scorer(int vocab_size, std::uint64_t salt) {
  return [vocab_size, salt](const std::vector<TokenId>& prefix) {
    std::uint64_t h = 1469598103934665603ULL ^ salt;
    for (TokenId id : prefix) {
      h ^= static_cast<std::uint64_t>(id) + 0x9e3779b97f4a7c15ULL;
      h *= 1099511628211ULL;
    }
    SplitMix64 rng(h);
    std::vector<double> row(static_cast<std::size_t>(vocab_size));
    double mx = -1e300;
    for (double& x : row) {
      x = rng.uniform() * 8.0 - 4.0;
      mx = std::max(mx, x);
    }
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    const double log_z = mx + std::log(z);
    for (double& x : row) x -= log_z;
    return row;
  };
}

struct Scored {
  std::vector<TokenId> ids;
  double logp;
};

// Every sequence the search could finish: <sos> (non-eos)^j <eos> with
// j <= max_len-1, scored exactly as the search scores it.
Scored exhaustive_best(const StepScorer& scorer, int vocab_size, TokenId eos, int max_len) {
  Scored best{{}, -1e300};
  std::function<void(std::vector<TokenId>&, double, int)> walk = [&](std::vector<TokenId>& prefix,
                                                                     double logp, int generated) {
    const std::vector<double> row = scorer(prefix);
    {  // close with <eos> here
      const double total = logp + row[static_cast<std::size_t>(eos)];
      std::vector<TokenId> ids = prefix;
      ids.push_back(eos);
      if (total > best.logp || (total == best.logp && ids < best.ids)) {
        best = Scored{std::move(ids), total};
      }
    }
    if (generated + 1 >= max_len) return;  // the next token would be the forced <eos>
    for (TokenId id = 0; id < vocab_size; ++id) {
      if (id == eos) continue;
      prefix.push_back(id);
      walk(prefix, logp + row[static_cast<std::size_t>(id)], generated + 1);
      prefix.pop_back();
    }
  };
  std::vector<TokenId> prefix = {CharVocab::kSos};
  walk(prefix, 0.0, 0);
  return best;
}

double sequence_logp(const StepScorer& scorer, const std::vector<TokenId>& ids) {
  double logp = 0.0;
  std::vector<TokenId> prefix = {ids.front()};
  for (std::size_t i = 1; i < ids.size(); ++i) {
    logp += scorer(prefix)[static_cast<std::size_t>(ids[i])];
    prefix.push_back(ids[i]);
  }
  return logp;
}

}  // namespace

// ---- beam search -----------------------------------------------------------------

TEST_CASE("a saturated beam finds the exhaustive optimum") {
  const int vocab = 5;
  const TokenId eos = CharVocab::kEos;
  for (std::uint64_t salt : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL, 6ULL}) {
    const StepScorer scorer = hashed_scorer(vocab, salt);
    const Scored oracle = exhaustive_best(scorer, vocab, eos, 4);
    const auto got = beam_decode_scored(scorer, vocab, eos, 1000, 4);
    CAPTURE(salt);
    REQUIRE(got == oracle.ids);
    REQUIRE(sequence_logp(scorer, got) == doctest::Approx(oracle.logp).epsilon(1e-12));
  }
}

TEST_CASE("narrow beams never beat the exhaustive optimum") {
  const int vocab = 6;
  const TokenId eos = CharVocab::kEos;
  for (std::uint64_t salt : {10ULL, 11ULL, 12ULL}) {
    const StepScorer scorer = hashed_scorer(vocab, salt);
    const Scored oracle = exhaustive_best(scorer, vocab, eos, 5);
    for (int k : {1, 2, 3, 8}) {
      const auto got = beam_decode_scored(scorer, vocab, eos, k, 5);
      REQUIRE(got.front() == CharVocab::kSos);
      REQUIRE(got.back() == eos);
      REQUIRE(static_cast<int>(got.size()) <= 5 + 2);
      REQUIRE(sequence_logp(scorer, got) <= oracle.logp + 1e-12);
    }
  }
}

TEST_CASE("beam width one reproduces greedy decoding") {
  const int vocab = 7;
  const TokenId eos = CharVocab::kEos;
  for (std::uint64_t salt : {21ULL, 22ULL, 23ULL, 24ULL}) {
    const StepScorer scorer = hashed_scorer(vocab, salt);

    // Greedy reference: argmax per step, lowest id on ties, forced <eos> at
    // the length cap.
    const int max_len = 6;
    std::vector<TokenId> greedy = {CharVocab::kSos};
    for (int step = 1; step <= max_len; ++step) {
      const auto row = scorer(greedy);
      TokenId pick = 0;
      if (step == max_len) {
        pick = eos;
      } else {
        for (TokenId id = 1; id < vocab; ++id) {
          if (row[static_cast<std::size_t>(id)] > row[static_cast<std::size_t>(pick)]) pick = id;
        }
      }
      greedy.push_back(pick);
      if (pick == eos) break;
    }
    REQUIRE(beam_decode_scored(scorer, vocab, eos, 1, max_len) == greedy);
  }
}

TEST_CASE("a rigged scorer walks the planted sequence") {
  const CharVocab& vocab = CharVocab::instance();
  const std::vector<TokenId> want = {CharVocab::kSos, vocab.id_of(U'a'), vocab.id_of(U'b'),
                                     vocab.id_of(U'c'), CharVocab::kEos};
  const StepScorer scorer = [&](const std::vector<TokenId>& prefix) {
    std::vector<double> row(static_cast<std::size_t>(vocab.size()), -20.0);
    const std::size_t step = prefix.size();
    const TokenId next = step < want.size() ? want[step] : CharVocab::kEos;
    row[static_cast<std::size_t>(next)] = -0.01;
    return row;
  };
  REQUIRE(beam_decode_scored(scorer, vocab.size(), CharVocab::kEos, 3, 10) == want);
  REQUIRE(decode_ids(beam_decode_scored(scorer, vocab.size(), CharVocab::kEos, 3, 10), vocab) ==
          U"abc");
}

TEST_CASE("equal-probability hypotheses resolve by ascending token ids") {
  const int vocab = 12;
  const TokenId eos = CharVocab::kEos;
  const StepScorer scorer = [&](const std::vector<TokenId>& prefix) {
    std::vector<double> row(static_cast<std::size_t>(vocab), -9.0);
    if (prefix.size() == 1) {
      row[7] = -0.1;
      row[9] = -0.1;  // two equally good openers
      row[static_cast<std::size_t>(eos)] = -8.0;
    } else {
      row[static_cast<std::size_t>(eos)] = -0.2;
    }
    return row;
  };
  const auto got = beam_decode_scored(scorer, vocab, eos, 4, 5);
  REQUIRE(got == std::vector<TokenId>{CharVocab::kSos, 7, eos});
}

TEST_CASE("hypotheses that never emit eos are closed at the length cap") {
  const int vocab = 6;
  const TokenId eos = CharVocab::kEos;
  // <eos> is always terrible; id 3 is always great.
  const StepScorer scorer = [&](const std::vector<TokenId>&) {
    std::vector<double> row(static_cast<std::size_t>(vocab), -6.0);
    row[3] = -0.05;
    row[static_cast<std::size_t>(eos)] = -30.0;
    return row;
  };
  const int max_len = 4;
  const auto got = beam_decode_scored(scorer, vocab, eos, 2, max_len);
  REQUIRE(got == std::vector<TokenId>{CharVocab::kSos, 3, 3, 3, eos});
  REQUIRE(sequence_logp(scorer, got) == doctest::Approx(3 * -0.05 + -30.0).epsilon(1e-12));
}

TEST_CASE("beam search validates width and length") {
  const StepScorer scorer = hashed_scorer(4, 1);
  REQUIRE_THROWS_AS(beam_decode_scored(scorer, 4, CharVocab::kEos, 0, 5), UsageError);
  REQUIRE_THROWS_AS(beam_decode_scored(scorer, 4, CharVocab::kEos, 3, 0), UsageError);
}

// ---- model construction ------------------------------------------------------------

TEST_CASE("the closed-form parameter count matches the built model") {
  const CharVocab& vocab = CharVocab::instance();
  for (int window : {1, 3, 5}) {
    TransformerConfig cfg;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.window = window;
    cfg.seed = 5;
    const Seq2SeqModel model = build_transformer(cfg);
    REQUIRE(model.params.total_params() ==
            static_cast<neural::Index>(transformer_param_count(cfg, vocab)));
  }
}

TEST_CASE("model construction is seed-deterministic") {
  TransformerConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.seed = 77;
  const Seq2SeqModel a = build_transformer(cfg);
  const Seq2SeqModel b = build_transformer(cfg);
  REQUIRE(a.params.entries().size() == b.params.entries().size());
  for (std::size_t i = 0; i < a.params.entries().size(); ++i) {
    REQUIRE(a.params.entries()[i].name == b.params.entries()[i].name);
    REQUIRE(a.params.entries()[i].value.data == b.params.entries()[i].value.data);
  }
  cfg.seed = 78;
  const Seq2SeqModel c = build_transformer(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.entries().size() && !any_diff; ++i) {
    any_diff = a.params.entries()[i].value.data != c.params.entries()[i].value.data;
  }
  REQUIRE(any_diff);

  GruConfig g;
  g.emb_dim = 8;
  g.hidden = 12;
  g.seed = 5;
  const Seq2SeqModel d = build_gru_generator(g);
  const Seq2SeqModel e = build_gru_generator(g);
  for (std::size_t i = 0; i < d.params.entries().size(); ++i) {
    REQUIRE(d.params.entries()[i].value.data == e.params.entries()[i].value.data);
  }
}

TEST_CASE("head count must divide the model width") {
  TransformerConfig cfg;
  cfg.d_model = 128;
  cfg.heads = 5;
  REQUIRE_THROWS_AS(build_transformer(cfg), UsageError);
}

TEST_CASE("model kinds name and parse consistently") {
  REQUIRE(kind_from_name(kind_name(ModelKind::transformer_corrector)) ==
          ModelKind::transformer_corrector);
  REQUIRE(kind_from_name(kind_name(ModelKind::gru_generator)) == ModelKind::gru_generator);
  REQUIRE_THROWS_AS(kind_from_name("галлюцинация"), DataError);
}

// ---- token correction plumbing ------------------------------------------------------

namespace {

Seq2SeqModel tiny_corrector(int window) {
  TransformerConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.dropout = 0.0;
  cfg.window = window;
  cfg.seed = 13;
  return build_transformer(cfg);
}

TokenStream tiny_stream() {
  TokenStream s;
  s.tokens = {U"kissa", U"juoksi", U"kadulla", U"ja", U"koira", U"kissa", U"juoksi"};
  s.doc_boundaries = {4, 7};
  return s;
}

}  // namespace

TEST_CASE("token correction preserves count and order and memoizes repeats") {
  const Seq2SeqModel model = tiny_corrector(3);
  const TokenStream in = tiny_stream();
  const TokenStream out = correct_tokens(model, in, 3, 1);
  REQUIRE(out.tokens.size() == in.tokens.size());
  REQUIRE(out.doc_boundaries == in.doc_boundaries);

  // Same window content must give the same output word (untrained per-window
  // determinism, and the final window repeats across documents).
  const TokenStream again = correct_tokens(model, in, 3, 1);
  REQUIRE(again.tokens == out.tokens);
}

TEST_CASE("token correction with several threads matches single-threaded output") {
  const Seq2SeqModel model = tiny_corrector(1);
  const TokenStream in = tiny_stream();
  const TokenStream one = correct_tokens(model, in, 1, 2, 1);
  const TokenStream four = correct_tokens(model, in, 1, 2, 4);
  REQUIRE(one.tokens == four.tokens);
  REQUIRE(one.doc_boundaries == four.doc_boundaries);
}

TEST_CASE("token correction validates the model kind, window and threads") {
  const Seq2SeqModel model = tiny_corrector(3);
  const TokenStream in = tiny_stream();
  REQUIRE_THROWS_AS(correct_tokens(model, in, 5, 1), UsageError);

  GruConfig g;
  g.emb_dim = 8;
  g.hidden = 12;
  const Seq2SeqModel gen = build_gru_generator(g);
  REQUIRE_THROWS_AS(correct_tokens(gen, in, 3, 1), UsageError);
  REQUIRE_THROWS_AS(correct_tokens(model, in, 3, 1, 0), UsageError);

  REQUIRE_THROWS_AS(beam_decode(gen, {CharVocab::kSos}, 1, 5), UsageError);
  REQUIRE_THROWS_AS(beam_decode(model, {CharVocab::kSos}, 1, max_target_len()), UsageError);
}

TEST_CASE("over-long words are truncated before window encoding") {
  const Seq2SeqModel model = tiny_corrector(1);
  TokenStream in;
  in.tokens = {Word(45, U'a')};  // longer than any encodable word
  in.doc_boundaries = {1};
  const TokenStream out = correct_tokens(model, in, 1, 1);
  REQUIRE(out.tokens.size() == 1);
}
