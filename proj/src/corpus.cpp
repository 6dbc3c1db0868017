#include "ocrrestore/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ocrrestore/error.hpp"
#include "ocrrestore/log.hpp"

namespace ocrrestore {

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\r' || c == U'\v' || c == U'\f';
}

void close_document(TokenStream& stream) {
  const std::size_t end = stream.tokens.size();
  if (stream.doc_boundaries.empty() && end == 0) return;
  if (!stream.doc_boundaries.empty() && stream.doc_boundaries.back() == end) return;
  stream.doc_boundaries.push_back(end);
}

}  // namespace

Word clean_word(const Word& word, const Alphabet& alphabet) {
  Word out;
  out.reserve(word.size());
  for (char32_t c : word) {
    const char32_t folded = fold_lower(c);
    if (alphabet.contains(folded)) out.push_back(folded);
  }
  return out;
}

TokenStream clean_text(const std::string& raw, const Alphabet& alphabet) {
  TokenStream stream;
  const Word text = utf8_decode(raw);
  Word current;
  bool line_blank = true;

  const auto flush_token = [&] {
    if (!current.empty()) {
      stream.tokens.push_back(current);
      current.clear();
    }
  };

  for (char32_t c : text) {
    if (c == U'\n') {
      flush_token();
      if (line_blank) close_document(stream);
      line_blank = true;
      continue;
    }
    if (is_space(c)) {
      flush_token();
      continue;
    }
    line_blank = false;
    const char32_t folded = fold_lower(c);
    if (alphabet.contains(folded)) current.push_back(folded);
  }
  flush_token();
  close_document(stream);
  return stream;
}

namespace {

// Splits one line of a delimiter-separated table. Fields may be quoted with
// '"'; an embedded quote is written as "".
std::vector<std::string> split_row(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == delimiter) {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

GtTable load_gt_table(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open GT table: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("GT table is empty: " + path);
  const std::vector<std::string> header = split_row(strip_cr(line), delimiter);

  int gt_col = -1;
  std::map<std::string, int> engine_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "GT") gt_col = static_cast<int>(i);
    for (const std::string& engine : gt_engines()) {
      if (header[i] == engine) engine_cols[engine] = static_cast<int>(i);
    }
  }
  if (gt_col < 0 || engine_cols.size() != gt_engines().size()) {
    throw DataError("GT table header must name columns GT, TESSERACT, OLD, FR11: " + path);
  }

  const Alphabet& alphabet = Alphabet::instance();
  GtTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) {
      ++table.dropped_blank;
      continue;
    }
    const std::vector<std::string> fields = split_row(line, delimiter);
    if (fields.size() != header.size()) {
      ++table.malformed;
      log::warn("GT table " + path + " line " + std::to_string(line_no) +
                ": expected " + std::to_string(header.size()) + " columns, got " +
                std::to_string(fields.size()) + "; row skipped");
      continue;
    }

    AlignedRow row;
    bool blank = false;
    bool non_alphabet = false;
    const auto to_cell = [&](int col) {
      Word cell = utf8_decode(fields[static_cast<std::size_t>(col)]);
      for (char32_t& c : cell) c = fold_lower(c);
      if (cell.empty()) blank = true;
      if (!alphabet.all_in(cell)) non_alphabet = true;
      return cell;
    };
    row.gt = to_cell(gt_col);
    for (const auto& [engine, col] : engine_cols) row.ocr[engine] = to_cell(col);

    if (blank) {
      ++table.dropped_blank;
    } else if (non_alphabet) {
      ++table.dropped_non_alphabet;
    } else {
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::vector<WindowSample> sliding_windows(const TokenStream& stream, int window) {
  if (window < 1 || window % 2 == 0) {
    throw UsageError("window size must be an odd positive integer, got " + std::to_string(window));
  }
  const int half = (window - 1) / 2;
  std::vector<WindowSample> samples;
  samples.reserve(stream.tokens.size());

  std::size_t doc_begin = 0;
  for (const std::size_t doc_end : stream.doc_boundaries) {
    for (std::size_t pos = doc_begin; pos < doc_end; ++pos) {
      WindowSample sample;
      sample.label = stream.tokens[pos];
      sample.target_corrupted = stream.tokens[pos];
      const std::size_t left_begin = pos - std::min<std::size_t>(pos - doc_begin, static_cast<std::size_t>(half));
      for (std::size_t i = left_begin; i < pos; ++i) sample.left.push_back(stream.tokens[i]);
      const std::size_t right_end = std::min(doc_end, pos + 1 + static_cast<std::size_t>(half));
      for (std::size_t i = pos + 1; i < right_end; ++i) sample.right.push_back(stream.tokens[i]);
      samples.push_back(std::move(sample));
    }
    doc_begin = doc_end;
  }
  return samples;
}

TokenStream read_token_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open token file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return clean_text(buffer.str());
}

void write_token_file(const TokenStream& stream, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write token file: " + path);
  std::size_t doc_begin = 0;
  bool first_doc = true;
  for (const std::size_t doc_end : stream.doc_boundaries) {
    if (!first_doc) out << "\n";
    first_doc = false;
    for (std::size_t i = doc_begin; i < doc_end; ++i) out << utf8_encode(stream.tokens[i]) << "\n";
    doc_begin = doc_end;
  }
}

}  // namespace ocrrestore
