#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ocrrestore/corpus.hpp"
#include "ocrrestore/lexicon.hpp"
#include "ocrrestore/models.hpp"
#include "ocrrestore/unicode.hpp"

namespace ocrrestore {

// One evaluated token: ground truth, raw OCR, model output, and the final
// form after optional post-processing.
struct EvalRecord {
  Word gt;
  Word ocr;
  Word corrected;
  Word final;
};

// The accuracy decomposition: overall exact-match accuracy of the final
// form, split by whether the OCR engine already had the token right. An
// empty partition reports an absent accuracy rather than zero.
struct EvalReport {
  std::string engine;
  std::size_t n_total = 0;
  std::size_t n_ocr_correct = 0;
  std::size_t n_ocr_error = 0;
  double overall_acc = 0.0;
  std::optional<double> correct_word_acc;
  std::optional<double> error_word_acc;
};

// 100 * exact matches / total.
double word_accuracy(const std::vector<Word>& preds, const std::vector<Word>& gts);

EvalReport split_accuracy(const std::vector<EvalRecord>& records, const std::string& engine = "");

// Post-correction cleanup: a correction the lexicon rejects falls back to
// the raw OCR form; accepted corrections get every 'v' rewritten to 'w' to
// match the historical spelling convention of the ground truth.
Word postprocess(const Word& corrected, const Word& ocr, const Lexicon& lex);

// Checked recomposition of the decomposed accuracies; reports must satisfy
// overall == (n_correct*cwa + n_error*ewa) / n_total within 1e-9.
double recompose_overall(const EvalReport& report);

// Audit-trail category for one record.
std::string record_category(const EvalRecord& r);

// Token correction driver used by evaluate_run; the production
// implementation wraps correct_tokens on a trained model, tests may
// substitute e.g. the identity.
using TokenCorrector = std::function<TokenStream(const TokenStream&)>;

struct EvalRun {
  EvalReport report;
  std::vector<EvalRecord> records;
};

// Scores one engine's column of the aligned table: builds the OCR token
// stream, corrects it, optionally post-processes each token, and assembles
// the report plus per-token records.
EvalRun evaluate_run(const GtTable& table, const std::string& engine,
                     const TokenCorrector& corrector, const Lexicon& lex, bool postproc);

EvalRun evaluate_run(const GtTable& table, const std::string& engine, const Seq2SeqModel& model,
                     const Lexicon& lex, int window, bool postproc, int beam_k = 3,
                     int threads = 1);

// `gt<TAB>ocr<TAB>corrected<TAB>final<TAB>category` per record.
void write_audit_tsv(const std::string& path, const std::vector<EvalRecord>& records);

// Human-readable table plus machine-readable key=value block.
std::string format_report(const EvalReport& report);

}  // namespace ocrrestore
