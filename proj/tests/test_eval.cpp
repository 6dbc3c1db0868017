#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ocrrestore/corpus.hpp"
#include "ocrrestore/error.hpp"
#include "ocrrestore/eval.hpp"
#include "ocrrestore/lexicon.hpp"

using namespace ocrrestore;

namespace {

const char* kFixtureDir = OCRR_FIXTURES_DIR;

Lexicon eval_lexicon() {
  return Lexicon({U"lukuvuoden", U"samppanjaa", U"talo", U"vuosi", U"koulu", U"kirja", U"lapsi",
                  U"vesi", U"metsä", U"suomi", U"katu"},
                 "hand");
}

EvalRecord rec(const Word& gt, const Word& ocr, const Word& corrected, const Word& final_form) {
  return EvalRecord{gt, ocr, corrected, final_form};
}

}  // namespace

TEST_CASE("word accuracy is percent exact matches") {
  REQUIRE(word_accuracy({U"a", U"b", U"c", U"d"}, {U"a", U"x", U"c", U"y"}) ==
          doctest::Approx(50.0));
  REQUIRE(word_accuracy({U"a"}, {U"a"}) == doctest::Approx(100.0));
  REQUIRE(word_accuracy({U"a"}, {U"b"}) == doctest::Approx(0.0));
  REQUIRE_THROWS_AS(word_accuracy({}, {}), DataError);
  REQUIRE_THROWS_AS(word_accuracy({U"a"}, {U"a", U"b"}), DataError);
}

TEST_CASE("the lexicon gate keeps valid corrections and falls back otherwise") {
  const Lexicon lex = eval_lexicon();
  // Valid correction: kept, with the v-to-w spelling rewrite.
  REQUIRE(postprocess(U"lukuvuoden", U"lukuwuoden", lex) == U"lukuwuoden");
  REQUIRE(postprocess(U"vuosi", U"wuosi", lex) == U"wuosi");
  // Valid correction without any 'v': unchanged.
  REQUIRE(postprocess(U"talo", U"taio", lex) == U"talo");
  // Invalid correction: the raw OCR form comes back untouched.
  REQUIRE(postprocess(U"samppaajaa", U"samppanjaa", lex) == U"samppanjaa");
  REQUIRE(postprocess(U"xqz", U"word", lex) == U"word");
}

TEST_CASE("split accuracy partitions by whether the engine was right") {
  // Engine right on record 1 (final wrong), wrong on record 2 (final right).
  const std::vector<EvalRecord> records = {
      rec(U"talo", U"talo", U"tala", U"tala"),
      rec(U"vuosi", U"wuosi", U"vuosi", U"vuosi"),
  };
  const EvalReport r = split_accuracy(records, "OLD");
  REQUIRE(r.engine == "OLD");
  REQUIRE(r.n_total == 2);
  REQUIRE(r.n_ocr_correct == 1);
  REQUIRE(r.n_ocr_error == 1);
  REQUIRE(r.overall_acc == doctest::Approx(50.0));
  REQUIRE(r.correct_word_acc.has_value());
  REQUIRE(*r.correct_word_acc == doctest::Approx(0.0));
  REQUIRE(r.error_word_acc.has_value());
  REQUIRE(*r.error_word_acc == doctest::Approx(100.0));
  REQUIRE(recompose_overall(r) == doctest::Approx(r.overall_acc).epsilon(1e-12));
}

TEST_CASE("an empty partition reports an absent accuracy, not zero") {
  const std::vector<EvalRecord> all_correct = {
      rec(U"talo", U"talo", U"talo", U"talo"),
      rec(U"vuosi", U"vuosi", U"vuosi", U"vuosi"),
  };
  const EvalReport r = split_accuracy(all_correct);
  REQUIRE(r.n_ocr_error == 0);
  REQUIRE(r.correct_word_acc.has_value());
  REQUIRE(!r.error_word_acc.has_value());
  REQUIRE(r.overall_acc == doctest::Approx(100.0));
  REQUIRE(recompose_overall(r) == doctest::Approx(100.0));

  const std::vector<EvalRecord> all_wrong = {rec(U"talo", U"tala", U"tulo", U"tulo")};
  const EvalReport w = split_accuracy(all_wrong);
  REQUIRE(!w.correct_word_acc.has_value());
  REQUIRE(w.error_word_acc.has_value());
  REQUIRE(*w.error_word_acc == doctest::Approx(0.0));

  REQUIRE_THROWS_AS(split_accuracy({}), DataError);
}

TEST_CASE("decomposed accuracies recompose to the overall figure") {
  // 3 correct-partition records (2 right) + 2 error-partition records (1 right).
  const std::vector<EvalRecord> records = {
      rec(U"a", U"a", U"a", U"a"),     rec(U"b", U"b", U"b", U"b"),
      rec(U"c", U"c", U"x", U"x"),     rec(U"d", U"q", U"d", U"d"),
      rec(U"e", U"r", U"z", U"z"),
  };
  const EvalReport r = split_accuracy(records);
  REQUIRE(r.overall_acc == doctest::Approx(60.0));
  REQUIRE(*r.correct_word_acc == doctest::Approx(100.0 * 2 / 3));
  REQUIRE(*r.error_word_acc == doctest::Approx(50.0));
  // (3 * 66.67 + 2 * 50) / 5 == 60
  REQUIRE(recompose_overall(r) == doctest::Approx(60.0).epsilon(1e-12));
  REQUIRE(std::abs(recompose_overall(r) - r.overall_acc) < 1e-9);
}

TEST_CASE("audit categories cover the two-by-two outcome grid") {
  REQUIRE(record_category(rec(U"a", U"a", U"a", U"a")) == "correct_kept");
  REQUIRE(record_category(rec(U"a", U"a", U"b", U"b")) == "correct_broken");
  REQUIRE(record_category(rec(U"a", U"b", U"a", U"a")) == "error_fixed");
  REQUIRE(record_category(rec(U"a", U"b", U"c", U"c")) == "error_missed");
  REQUIRE(record_category(rec(U"a", U"b", U"b", U"b")) == "error_missed");
}

TEST_CASE("evaluating the identity corrector reproduces the engine baseline") {
  const GtTable table = load_gt_table(std::string(kFixtureDir) + "/gt_table.csv");
  const Lexicon lex = eval_lexicon();
  const TokenCorrector identity = [](const TokenStream& s) { return s; };

  // Without post-processing the final form is exactly the OCR form.
  const EvalRun run = evaluate_run(table, "OLD", identity, lex, false);
  REQUIRE(run.records.size() == table.rows.size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    REQUIRE(run.records[i].gt == table.rows[i].gt);
    REQUIRE(run.records[i].ocr == table.rows[i].ocr.at("OLD"));
    REQUIRE(run.records[i].corrected == run.records[i].ocr);
    REQUIRE(run.records[i].final == run.records[i].ocr);
  }
  // Fixture OLD column: wuosi/lapsl wrong, 5 of 7 right.
  REQUIRE(run.report.n_total == 7);
  REQUIRE(run.report.n_ocr_correct == 5);
  REQUIRE(run.report.n_ocr_error == 2);
  REQUIRE(run.report.overall_acc == doctest::Approx(100.0 * 5 / 7));
  REQUIRE(*run.report.correct_word_acc == doctest::Approx(100.0));
  REQUIRE(*run.report.error_word_acc == doctest::Approx(0.0));
}

TEST_CASE("a perfect corrector scores one hundred on the error partition") {
  const GtTable table = load_gt_table(std::string(kFixtureDir) + "/gt_table.csv");
  const Lexicon lex = eval_lexicon();
  // Cheating corrector: looks up the matching GT token by position.
  std::size_t cursor = 0;
  const TokenCorrector cheat = [&](const TokenStream& s) {
    TokenStream out = s;
    for (std::size_t i = 0; i < out.tokens.size(); ++i) out.tokens[i] = table.rows[cursor + i].gt;
    cursor += out.tokens.size();
    return out;
  };
  const EvalRun run = evaluate_run(table, "OLD", cheat, lex, false);
  REQUIRE(run.report.overall_acc == doctest::Approx(100.0));
  REQUIRE(*run.report.error_word_acc == doctest::Approx(100.0));
}

TEST_CASE("post-processing rescues rejected corrections through the lexicon gate") {
  GtTable table;
  AlignedRow r1;  // model breaks a valid OCR token -> lexicon fallback saves it
  r1.gt = U"samppanjaa";
  r1.ocr["TESSERACT"] = U"samppanjaa";
  r1.ocr["OLD"] = U"samppanjaa";
  r1.ocr["FR11"] = U"samppanjaa";
  AlignedRow r2;  // model fixes wuosi -> vuosi, spelling rule restores the w
  r2.gt = U"wuosi";
  r2.ocr["TESSERACT"] = U"wuosi";
  r2.ocr["OLD"] = U"wuosi";
  r2.ocr["FR11"] = U"wuosi";
  table.rows = {r1, r2};

  const Lexicon lex = eval_lexicon();
  const TokenCorrector mangler = [](const TokenStream& s) {
    TokenStream out = s;
    out.tokens[0] = U"samppaajaa";  // invalid word: must fall back
    out.tokens[1] = U"vuosi";       // valid word: v -> w restores gt spelling
    return out;
  };

  const EvalRun with_post = evaluate_run(table, "OLD", mangler, lex, true);
  REQUIRE(with_post.records[0].final == U"samppanjaa");
  REQUIRE(with_post.records[1].final == U"wuosi");
  REQUIRE(with_post.report.overall_acc == doctest::Approx(100.0));

  const EvalRun no_post = evaluate_run(table, "OLD", mangler, lex, false);
  REQUIRE(no_post.records[0].final == U"samppaajaa");
  REQUIRE(no_post.records[1].final == U"vuosi");
  REQUIRE(no_post.report.overall_acc == doctest::Approx(0.0));
}

TEST_CASE("evaluation validates engines, tables and corrector output") {
  const GtTable table = load_gt_table(std::string(kFixtureDir) + "/gt_table.csv");
  const Lexicon lex = eval_lexicon();
  const TokenCorrector identity = [](const TokenStream& s) { return s; };

  REQUIRE_THROWS_AS(evaluate_run(table, "INKJET", identity, lex, false), UsageError);
  REQUIRE_THROWS_AS(evaluate_run(GtTable{}, "OLD", identity, lex, false), DataError);

  const TokenCorrector dropper = [](const TokenStream& s) {
    TokenStream out = s;
    out.tokens.pop_back();
    return out;
  };
  REQUIRE_THROWS_AS(evaluate_run(table, "OLD", dropper, lex, false), DataError);
}

TEST_CASE("the audit file lists every record with its category") {
  const std::vector<EvalRecord> records = {
      rec(U"wuosi", U"wuosl", U"vuosi", U"wuosi"),
      rec(U"metsä", U"metsä", U"metsä", U"metsä"),
  };
  const std::string path = "audit_test.tsv";
  write_audit_tsv(path, records);
  std::ifstream in(path, std::ios::binary);
  std::stringstream got;
  got << in.rdbuf();
  in.close();
  std::remove(path.c_str());
  REQUIRE(got.str() ==
          "gt\tocr\tcorrected\tfinal\tcategory\n"
          "wuosi\twuosl\tvuosi\twuosi\terror_fixed\n"
          "metsä\tmetsä\tmetsä\tmetsä\tcorrect_kept\n");
}

TEST_CASE("the formatted report carries exact machine-readable figures") {
  const std::vector<EvalRecord> records = {
      rec(U"a", U"a", U"a", U"a"),
      rec(U"b", U"x", U"b", U"b"),
      rec(U"c", U"y", U"z", U"z"),
  };
  EvalReport r = split_accuracy(records, "FR11");
  const std::string text = format_report(r);
  REQUIRE(text.find("engine=FR11") != std::string::npos);
  REQUIRE(text.find("n_total=3") != std::string::npos);
  REQUIRE(text.find("n_ocr_correct=1") != std::string::npos);
  REQUIRE(text.find("n_ocr_error=2") != std::string::npos);
  REQUIRE(text.find("overall_acc=") != std::string::npos);
  REQUIRE(text.find("correct_word_acc=100") != std::string::npos);
  REQUIRE(text.find("error_word_acc=50") != std::string::npos);

  EvalReport lone = split_accuracy({rec(U"a", U"a", U"a", U"a")});
  const std::string lone_text = format_report(lone);
  REQUIRE(lone_text.find("error_word_acc=absent") != std::string::npos);
}
