#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "ocrrestore/corpus.hpp"
#include "ocrrestore/error.hpp"

using namespace ocrrestore;

namespace {
const std::string kFixtures = OCRR_FIXTURES_DIR;
}

TEST_CASE("clean_text lowercases, strips non-alphabet and splits documents") {
  const std::string raw = "Hello, World!\nT\xc3\xa4m\xc3\xa4 on 123 testi.\n\nToinen dokumentti\n";
  const TokenStream stream = clean_text(raw);
  const std::vector<Word> expected = {U"hello", U"world", U"tämä", U"on",
                                      U"testi", U"toinen", U"dokumentti"};
  REQUIRE(stream.tokens == expected);
  REQUIRE(stream.doc_boundaries == std::vector<std::size_t>{5, 7});
}

TEST_CASE("clean_text drops tokens emptied by filtering") {
  const TokenStream stream = clean_text("1908 --- kissa 42");
  REQUIRE(stream.tokens == std::vector<Word>{U"kissa"});
  REQUIRE(stream.doc_boundaries == std::vector<std::size_t>{1});
}

TEST_CASE("clean_text on blank input yields an empty stream") {
  const TokenStream stream = clean_text("\n\n  \n");
  REQUIRE(stream.tokens.empty());
  REQUIRE(stream.doc_boundaries.empty());
}

TEST_CASE("clean_word folds case and filters the alphabet") {
  REQUIRE(clean_word(U"Kissa!") == U"kissa");
  REQUIRE(clean_word(U"VUOSI-1908") == U"vuosi");
  REQUIRE(clean_word(U"über") == U"ber");  // ü is not a Finnish letter
  REQUIRE(clean_word(U"метсä") == U"ä");
  REQUIRE(clean_word(U"") == U"");
}

TEST_CASE("load_gt_table keeps clean rows and counts the dropped ones") {
  const GtTable table = load_gt_table(kFixtures + "/gt_table.csv");
  REQUIRE(table.rows.size() == 7);
  REQUIRE(table.dropped_non_alphabet == 1);  // ta1on
  REQUIRE(table.dropped_blank == 1);         // blank GT cell
  REQUIRE(table.malformed == 1);             // three-column row

  REQUIRE(table.rows[0].gt == U"vuosi");
  REQUIRE(table.rows[0].ocr.at("TESSERACT") == U"vuosi");
  REQUIRE(table.rows[0].ocr.at("OLD") == U"wuosi");
  REQUIRE(table.rows[0].ocr.at("FR11") == U"vuosi");

  // Case folding: the header row "Suomi,..." arrives lowercased.
  REQUIRE(table.rows[6].gt == U"suomi");
  for (const AlignedRow& row : table.rows) {
    REQUIRE(row.ocr.size() == 3);
    for (const std::string& engine : gt_engines()) REQUIRE(row.ocr.count(engine) == 1);
  }
}

TEST_CASE("load_gt_table rejects missing files and missing columns") {
  REQUIRE_THROWS_AS(load_gt_table(kFixtures + "/does_not_exist.csv"), DataError);
}

TEST_CASE("sliding_windows respects document boundaries") {
  TokenStream stream;
  stream.tokens = {U"a", U"b", U"c", U"d", U"e"};
  stream.doc_boundaries = {3, 5};  // docs: [a b c] [d e]

  const auto samples = sliding_windows(stream, 3);
  REQUIRE(samples.size() == 5);

  // First document.
  REQUIRE(samples[0].left.empty());
  REQUIRE(samples[0].label == U"a");
  REQUIRE(samples[0].right == std::vector<Word>{U"b"});
  REQUIRE(samples[1].left == std::vector<Word>{U"a"});
  REQUIRE(samples[1].right == std::vector<Word>{U"c"});
  REQUIRE(samples[2].left == std::vector<Word>{U"b"});
  REQUIRE(samples[2].right.empty());

  // Second document: no context leaks across the boundary.
  REQUIRE(samples[3].left.empty());
  REQUIRE(samples[3].label == U"d");
  REQUIRE(samples[3].right == std::vector<Word>{U"e"});
  REQUIRE(samples[4].left == std::vector<Word>{U"d"});
  REQUIRE(samples[4].right.empty());

  for (const WindowSample& s : samples) REQUIRE(s.target_corrupted == s.label);
}

TEST_CASE("sliding_windows window 5 takes two words per side") {
  TokenStream stream;
  stream.tokens = {U"a", U"b", U"c", U"d", U"e"};
  stream.doc_boundaries = {5};
  const auto samples = sliding_windows(stream, 5);
  REQUIRE(samples[2].left == std::vector<Word>{U"a", U"b"});
  REQUIRE(samples[2].right == std::vector<Word>{U"d", U"e"});
  REQUIRE(samples[4].left == std::vector<Word>{U"c", U"d"});
  REQUIRE(samples[4].right.empty());
}

TEST_CASE("sliding_windows window 1 has no context") {
  TokenStream stream;
  stream.tokens = {U"a", U"b"};
  stream.doc_boundaries = {2};
  for (const WindowSample& s : sliding_windows(stream, 1)) {
    REQUIRE(s.left.empty());
    REQUIRE(s.right.empty());
  }
}

TEST_CASE("sliding_windows rejects even or non-positive windows") {
  TokenStream stream;
  stream.tokens = {U"a"};
  stream.doc_boundaries = {1};
  REQUIRE_THROWS_AS(sliding_windows(stream, 4), UsageError);
  REQUIRE_THROWS_AS(sliding_windows(stream, 0), UsageError);
  REQUIRE_THROWS_AS(sliding_windows(stream, -3), UsageError);
}

TEST_CASE("token files round-trip through write and read") {
  const TokenStream stream = clean_text("kissa juoksi\n\nkoira nukkui tiellä\n");
  const std::string path = "roundtrip_tokens.txt";
  write_token_file(stream, path);
  const TokenStream back = read_token_file(path);
  REQUIRE(back.tokens == stream.tokens);
  REQUIRE(back.doc_boundaries == stream.doc_boundaries);
  std::remove(path.c_str());
}

TEST_CASE("tiny corpus fixture cleans to the expected stream") {
  const GtTable unused = load_gt_table(kFixtures + "/gt_table.csv");
  (void)unused;
  const TokenStream stream = read_token_file(kFixtures + "/tiny_corpus.txt");
  REQUIRE(stream.doc_boundaries.size() == 2);
  REQUIRE(stream.tokens[0] == U"kissa");
  // "1908" dissolves entirely; "mäellä," loses its comma.
  for (const Word& w : stream.tokens) {
    REQUIRE(!w.empty());
    REQUIRE(Alphabet::instance().all_in(w));
  }
}
