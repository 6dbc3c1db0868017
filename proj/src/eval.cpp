#include "ocrrestore/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ocrrestore/error.hpp"

namespace ocrrestore {

double word_accuracy(const std::vector<Word>& preds, const std::vector<Word>& gts) {
  if (preds.size() != gts.size()) {
    throw DataError("length mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(gts.size()) + " references");
  }
  if (preds.empty()) throw DataError("cannot score an empty word list");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == gts[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

EvalReport split_accuracy(const std::vector<EvalRecord>& records, const std::string& engine) {
  if (records.empty()) throw DataError("cannot score an empty record set");
  EvalReport report;
  report.engine = engine;
  report.n_total = records.size();
  std::size_t hits_correct = 0, hits_error = 0, hits_all = 0;
  for (const EvalRecord& r : records) {
    const bool ocr_right = r.ocr == r.gt;
    const bool final_right = r.final == r.gt;
    if (ocr_right) {
      ++report.n_ocr_correct;
      hits_correct += final_right ? 1 : 0;
    } else {
      ++report.n_ocr_error;
      hits_error += final_right ? 1 : 0;
    }
    hits_all += final_right ? 1 : 0;
  }
  report.overall_acc =
      100.0 * static_cast<double>(hits_all) / static_cast<double>(report.n_total);
  if (report.n_ocr_correct > 0) {
    report.correct_word_acc =
        100.0 * static_cast<double>(hits_correct) / static_cast<double>(report.n_ocr_correct);
  }
  if (report.n_ocr_error > 0) {
    report.error_word_acc =
        100.0 * static_cast<double>(hits_error) / static_cast<double>(report.n_ocr_error);
  }
  return report;
}

Word postprocess(const Word& corrected, const Word& ocr, const Lexicon& lex) {
  if (!lex.is_valid(corrected)) return ocr;
  Word out = corrected;
  std::replace(out.begin(), out.end(), U'v', U'w');
  return out;
}

double recompose_overall(const EvalReport& report) {
  if (report.n_total == 0) throw DataError("empty report cannot be recomposed");
  double weighted = 0.0;
  if (report.correct_word_acc) {
    weighted += static_cast<double>(report.n_ocr_correct) * *report.correct_word_acc;
  }
  if (report.error_word_acc) {
    weighted += static_cast<double>(report.n_ocr_error) * *report.error_word_acc;
  }
  return weighted / static_cast<double>(report.n_total);
}

std::string record_category(const EvalRecord& r) {
  const bool ocr_right = r.ocr == r.gt;
  const bool final_right = r.final == r.gt;
  if (ocr_right) return final_right ? "correct_kept" : "correct_broken";
  return final_right ? "error_fixed" : "error_missed";
}

EvalRun evaluate_run(const GtTable& table, const std::string& engine,
                     const TokenCorrector& corrector, const Lexicon& lex, bool postproc) {
  const auto& engines = gt_engines();
  if (std::find(engines.begin(), engines.end(), engine) == engines.end()) {
    throw UsageError("unknown OCR engine: " + engine);
  }
  if (table.rows.empty()) throw DataError("ground-truth table has no usable rows");

  TokenStream ocr_stream;
  for (const AlignedRow& row : table.rows) {
    ocr_stream.tokens.push_back(row.ocr.at(engine));
  }
  ocr_stream.doc_boundaries = {ocr_stream.tokens.size()};

  const TokenStream corrected = corrector(ocr_stream);
  if (corrected.tokens.size() != table.rows.size()) {
    throw DataError("corrector returned " + std::to_string(corrected.tokens.size()) +
                    " tokens for " + std::to_string(table.rows.size()) + " rows");
  }

  EvalRun run;
  run.records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    EvalRecord rec;
    rec.gt = table.rows[i].gt;
    rec.ocr = ocr_stream.tokens[i];
    rec.corrected = corrected.tokens[i];
    rec.final = postproc ? postprocess(rec.corrected, rec.ocr, lex) : rec.corrected;
    run.records.push_back(std::move(rec));
  }
  run.report = split_accuracy(run.records, engine);
  return run;
}

EvalRun evaluate_run(const GtTable& table, const std::string& engine, const Seq2SeqModel& model,
                     const Lexicon& lex, int window, bool postproc, int beam_k, int threads) {
  return evaluate_run(
      table, engine,
      [&](const TokenStream& stream) {
        return correct_tokens(model, stream, window, beam_k, threads);
      },
      lex, postproc);
}

void write_audit_tsv(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audit file: " + path);
  std::ostringstream buf;
  buf << "gt\tocr\tcorrected\tfinal\tcategory\n";
  for (const EvalRecord& r : records) {
    buf << utf8_encode(r.gt) << '\t' << utf8_encode(r.ocr) << '\t' << utf8_encode(r.corrected)
        << '\t' << utf8_encode(r.final) << '\t' << record_category(r) << '\n';
  }
  out << buf.str();
  if (!out) throw DataError("failed while writing audit file: " + path);
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  const std::string engine = report.engine.empty() ? "-" : report.engine;
  out << "engine            " << engine << "\n";
  out << "tokens            " << report.n_total << " (" << report.n_ocr_correct
      << " ocr-correct, " << report.n_ocr_error << " ocr-error)\n";
  out << "overall_acc       " << report.overall_acc << "\n";
  out << "correct_word_acc  ";
  if (report.correct_word_acc) {
    out << *report.correct_word_acc << "\n";
  } else {
    out << "absent (no ocr-correct tokens)\n";
  }
  out << "error_word_acc    ";
  if (report.error_word_acc) {
    out << *report.error_word_acc << "\n";
  } else {
    out << "absent (no ocr-error tokens)\n";
  }
  out << "\n";
  out << std::setprecision(17);
  out << "report.engine=" << engine << "\n";
  out << "report.n_total=" << report.n_total << "\n";
  out << "report.n_ocr_correct=" << report.n_ocr_correct << "\n";
  out << "report.n_ocr_error=" << report.n_ocr_error << "\n";
  out << "report.overall_acc=" << report.overall_acc << "\n";
  out << "report.correct_word_acc="
      << (report.correct_word_acc ? std::to_string(*report.correct_word_acc) : "absent") << "\n";
  out << "report.error_word_acc="
      << (report.error_word_acc ? std::to_string(*report.error_word_acc) : "absent") << "\n";
  return out.str();
}

}  // namespace ocrrestore
