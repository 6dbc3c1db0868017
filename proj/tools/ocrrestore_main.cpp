// Command-line surface: each subcommand wires one pipeline stage to the
// documented file formats (token streams, pairs TSV, checkpoints, reports)
// and writes a resolved-config snapshot plus a fingerprint manifest so every
// output directory is self-describing and re-runnable.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ocrrestore/checkpoint.hpp"
#include "ocrrestore/corpus.hpp"
#include "ocrrestore/digest.hpp"
#include "ocrrestore/embedding.hpp"
#include "ocrrestore/error.hpp"
#include "ocrrestore/errorgen.hpp"
#include "ocrrestore/eval.hpp"
#include "ocrrestore/lexicon.hpp"
#include "ocrrestore/log.hpp"
#include "ocrrestore/models.hpp"
#include "ocrrestore/pairgen.hpp"
#include "ocrrestore/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ocrrestore;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spew(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
  if (!out) throw DataError("failed while writing file: " + path);
}

std::string file_fingerprint(const std::string& path) { return to_hex(fnv1a64(slurp(path))); }

void require_cli(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

// Option resolution with flag > config-file > default precedence. Every key
// a subcommand understands is registered through apply()/note(); leftover
// config keys are rejected, and the merged values are written out as
// resolved_config.json before any real work begins.
class RunConfig {
 public:
  RunConfig(std::string subcommand, const std::string& config_path) : sub_(std::move(subcommand)) {
    if (config_path.empty()) {
      cfg_ = json::object();
    } else {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw UsageError("cannot open config file: " + config_path);
      std::ostringstream buf;
      buf << in.rdbuf();
      try {
        cfg_ = json::parse(buf.str());
      } catch (const json::exception& e) {
        throw UsageError("config file " + config_path + " is not valid JSON: " + e.what());
      }
      if (!cfg_.is_object()) throw UsageError("config file must hold a JSON object");
    }
    resolved_["subcommand"] = sub_;
  }

  template <typename T>
  void apply(const std::string& key, T& value, bool flag_given) {
    known_.insert(key);
    if (!flag_given && cfg_.contains(key)) {
      try {
        value = cfg_.at(key).get<T>();
      } catch (const json::exception&) {
        throw UsageError("config key '" + key + "' has the wrong type");
      }
    }
    resolved_[key] = value;
  }

  // Overwrites the snapshot value for a key whose final form is only known
  // after some resolution step (e.g. a window taken from a checkpoint).
  template <typename T>
  void note(const std::string& key, const T& value) {
    known_.insert(key);
    resolved_[key] = value;
  }

  void write_snapshot(const std::string& out_dir) const {
    for (auto it = cfg_.begin(); it != cfg_.end(); ++it) {
      if (known_.count(it.key()) == 0) throw UsageError("unknown config key: " + it.key());
    }
    spew(out_dir + "/resolved_config.json", resolved_.dump(2) + "\n");
  }

 private:
  std::string sub_;
  json cfg_;
  json resolved_;
  std::set<std::string> known_;
};

// Sorted key=value manifest fingerprinting every input and output of a run.
// Paths of outputs are relative to the output directory and nothing
// time-dependent is recorded, so identical runs write identical manifests.
class RunManifest {
 public:
  explicit RunManifest(const std::string& subcommand) { entries_["subcommand"] = subcommand; }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  void add_input(const std::string& name, const std::string& path) {
    entries_["input." + name + ".path"] = path;
    entries_["input." + name + ".fnv64"] = file_fingerprint(path);
  }

  void add_output(const std::string& name, const std::string& out_dir, const std::string& rel) {
    entries_["output." + name + ".path"] = rel;
    entries_["output." + name + ".fnv64"] = file_fingerprint(out_dir + "/" + rel);
  }

  void write(const std::string& out_dir) const {
    std::ostringstream buf;
    for (const auto& [key, value] : entries_) buf << key << '=' << value << '\n';
    spew(out_dir + "/manifest.txt", buf.str());
  }

 private:
  std::map<std::string, std::string> entries_;
};

void begin_run(RunConfig& rc, const std::string& out_dir) {
  require_cli(!out_dir.empty(), "--out is required");
  fs::create_directories(out_dir);
  rc.write_snapshot(out_dir);
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// ---- clean ----------------------------------------------------------------

struct CleanOpts {
  std::string config, input, out;
};

void run_clean(CleanOpts& o, CLI::App& sub) {
  RunConfig rc("clean", o.config);
  rc.apply("input", o.input, sub.count("--input") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  require_cli(!o.input.empty(), "--input is required");
  begin_run(rc, o.out);

  RunManifest man("clean");
  man.add_input("input", o.input);
  const TokenStream stream = clean_text(slurp(o.input));
  if (stream.empty()) throw DataError("input produced no tokens: " + o.input);
  write_token_file(stream, o.out + "/tokens.txt");
  man.set("tokens", std::to_string(stream.size()));
  man.set("documents", std::to_string(stream.doc_boundaries.size()));
  man.add_output("tokens", o.out, "tokens.txt");
  man.write(o.out);
  log::info("clean: " + std::to_string(stream.size()) + " tokens in " +
            std::to_string(stream.doc_boundaries.size()) + " documents");
}

// ---- train-embeddings ------------------------------------------------------

struct TrainEmbeddingsOpts {
  std::string config, input, out;
  SgnsConfig cfg;
};

void run_train_embeddings(TrainEmbeddingsOpts& o, CLI::App& sub) {
  RunConfig rc("train-embeddings", o.config);
  rc.apply("input", o.input, sub.count("--input") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("seed", o.cfg.seed, sub.count("--seed") > 0);
  rc.apply("dim", o.cfg.dim, sub.count("--dim") > 0);
  rc.apply("window", o.cfg.window, sub.count("--window") > 0);
  rc.apply("negatives", o.cfg.negatives, sub.count("--negatives") > 0);
  rc.apply("epochs", o.cfg.epochs, sub.count("--epochs") > 0);
  rc.apply("min_count", o.cfg.min_count, sub.count("--min-count") > 0);
  rc.apply("learning_rate", o.cfg.learning_rate, sub.count("--learning-rate") > 0);
  require_cli(!o.input.empty(), "--input is required");
  require_cli(o.cfg.dim > 0, "--dim must be positive");
  require_cli(o.cfg.window >= 1, "--window must be at least 1");
  require_cli(o.cfg.negatives >= 1, "--negatives must be at least 1");
  require_cli(o.cfg.epochs >= 1, "--epochs must be at least 1");
  require_cli(o.cfg.min_count >= 1, "--min-count must be at least 1");
  require_cli(o.cfg.learning_rate > 0, "--learning-rate must be positive");
  begin_run(rc, o.out);

  RunManifest man("train-embeddings");
  man.add_input("input", o.input);
  const TokenStream stream = read_token_file(o.input);
  const EmbeddingModel model = train_sgns(stream, o.cfg);
  save_embedding(model, o.cfg, o.out + "/embeddings.ckpt");
  man.set("vocab", std::to_string(model.words.size()));
  if (!model.epoch_losses.empty()) man.set("final_epoch_loss", fmt(model.epoch_losses.back()));
  man.add_output("embeddings", o.out, "embeddings.ckpt");
  man.write(o.out);
  for (std::size_t e = 0; e < model.epoch_losses.size(); ++e) {
    log::info("sgns epoch " + std::to_string(e + 1) + " mean pair loss " +
              fmt(model.epoch_losses[e]));
  }
  log::info("train-embeddings: " + std::to_string(model.words.size()) + " vocabulary words");
}

// ---- extract-pairs ---------------------------------------------------------

struct ExtractPairsOpts {
  std::string config, embeddings, neighbor_table, lexicon, out;
  ExtractionConfig cfg;
};

void run_extract_pairs(ExtractPairsOpts& o, CLI::App& sub) {
  RunConfig rc("extract-pairs", o.config);
  rc.apply("embeddings", o.embeddings, sub.count("--embeddings") > 0);
  rc.apply("neighbor_table", o.neighbor_table, sub.count("--neighbor-table") > 0);
  rc.apply("lexicon", o.lexicon, sub.count("--lexicon") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("neighbors_k", o.cfg.neighbors_k, sub.count("--neighbors-k") > 0);
  rc.apply("max_edit_distance", o.cfg.max_edit_distance, sub.count("--max-edit-distance") > 0);
  rc.apply("min_word_len", o.cfg.min_word_len, sub.count("--min-word-len") > 0);
  rc.apply("anchor_only", o.cfg.anchor_only, sub.count("--anchor-only") > 0);
  require_cli(o.embeddings.empty() != o.neighbor_table.empty(),
              "exactly one of --embeddings or --neighbor-table is required");
  require_cli(!o.lexicon.empty(), "--lexicon is required");
  require_cli(o.cfg.neighbors_k >= 1, "--neighbors-k must be at least 1");
  require_cli(o.cfg.max_edit_distance >= 0, "--max-edit-distance must be non-negative");
  require_cli(o.cfg.min_word_len >= 1, "--min-word-len must be at least 1");
  begin_run(rc, o.out);

  RunManifest man("extract-pairs");
  man.add_input("lexicon", o.lexicon);
  const Lexicon lex = load_wordlist(o.lexicon);
  std::vector<ParallelPair> pairs;
  if (!o.embeddings.empty()) {
    man.add_input("embeddings", o.embeddings);
    const auto [model, sgns_cfg] = load_embedding(o.embeddings);
    const std::set<Word> correct = build_correct_list(model, lex);
    man.set("correct_list", std::to_string(correct.size()));
    pairs = extract_pairs(model, correct, lex, o.cfg);
  } else {
    man.add_input("neighbor_table", o.neighbor_table);
    const NeighborTable table = load_neighbors_tsv(o.neighbor_table);
    std::set<Word> correct;
    for (const auto& [word, neighbors] : table) {
      if (lex.is_valid(word)) correct.insert(word);
    }
    man.set("correct_list", std::to_string(correct.size()));
    pairs = extract_pairs(table, correct, lex, o.cfg);
  }
  write_pairs_tsv(o.out + "/pairs.tsv", pairs);
  man.set("pairs", std::to_string(pairs.size()));
  man.add_output("pairs", o.out, "pairs.tsv");
  man.write(o.out);
  log::info("extract-pairs: " + std::to_string(pairs.size()) + " parallel pairs");
}

// ---- train-generator -------------------------------------------------------

struct TrainGeneratorOpts {
  std::string config, pairs, out;
  GruConfig cfg;
  TrainOptions opts;
};

void run_train_generator(TrainGeneratorOpts& o, CLI::App& sub) {
  RunConfig rc("train-generator", o.config);
  rc.apply("pairs", o.pairs, sub.count("--pairs") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("seed", o.cfg.seed, sub.count("--seed") > 0);
  rc.apply("emb_dim", o.cfg.emb_dim, sub.count("--emb-dim") > 0);
  rc.apply("hidden", o.cfg.hidden, sub.count("--hidden") > 0);
  rc.apply("lr", o.cfg.lr, sub.count("--lr") > 0);
  rc.apply("batch_size", o.cfg.batch_size, sub.count("--batch-size") > 0);
  rc.apply("max_epochs", o.cfg.max_epochs, sub.count("--max-epochs") > 0);
  rc.apply("teacher_forcing", o.cfg.teacher_forcing, sub.count("--teacher-forcing") > 0);
  rc.apply("min_improve", o.opts.min_improve, sub.count("--min-improve") > 0);
  rc.apply("patience", o.opts.patience, sub.count("--patience") > 0);
  require_cli(!o.pairs.empty(), "--pairs is required");
  require_cli(o.cfg.emb_dim > 0, "--emb-dim must be positive");
  require_cli(o.cfg.hidden > 0, "--hidden must be positive");
  require_cli(o.cfg.lr > 0, "--lr must be positive");
  require_cli(o.cfg.batch_size >= 1, "--batch-size must be at least 1");
  require_cli(o.cfg.max_epochs >= 1, "--max-epochs must be at least 1");
  require_cli(o.cfg.teacher_forcing >= 0 && o.cfg.teacher_forcing <= 1,
              "--teacher-forcing must lie in [0, 1]");
  require_cli(o.opts.min_improve >= 0, "--min-improve must be non-negative");
  require_cli(o.opts.patience >= 1, "--patience must be at least 1");
  begin_run(rc, o.out);

  RunManifest man("train-generator");
  man.add_input("pairs", o.pairs);
  const std::vector<ParallelPair> pairs = load_pairs_tsv(o.pairs);
  o.opts.data_fingerprint = file_fingerprint(o.pairs);
  const Seq2SeqModel model = train_error_generator(pairs, o.cfg, o.opts);
  save_checkpoint(model, o.out + "/generator.ckpt");
  man.set("pairs", std::to_string(pairs.size()));
  man.set("epochs_run", std::to_string(model.manifest.loss_history.size()));
  man.set("best_epoch", std::to_string(model.manifest.best_epoch));
  man.add_output("generator", o.out, "generator.ckpt");
  man.write(o.out);
  for (std::size_t e = 0; e < model.manifest.loss_history.size(); ++e) {
    log::info("generator epoch " + std::to_string(e + 1) + " mean loss " +
              fmt(model.manifest.loss_history[e]));
  }
  log::info("train-generator: kept epoch " + std::to_string(model.manifest.best_epoch));
}

// ---- corrupt ---------------------------------------------------------------

struct CorruptOpts {
  std::string config, input, generator, out;
  double noise_rate = 0.07;
  std::uint64_t seed = 1;
  bool greedy = false;
};

void run_corrupt(CorruptOpts& o, CLI::App& sub) {
  RunConfig rc("corrupt", o.config);
  rc.apply("input", o.input, sub.count("--input") > 0);
  rc.apply("generator", o.generator, sub.count("--generator") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("seed", o.seed, sub.count("--seed") > 0);
  rc.apply("noise_rate", o.noise_rate, sub.count("--noise-rate") > 0);
  rc.apply("greedy", o.greedy, sub.count("--greedy") > 0);
  require_cli(!o.input.empty(), "--input is required");
  require_cli(o.noise_rate >= 0, "--noise-rate must be non-negative");
  begin_run(rc, o.out);

  RunManifest man("corrupt");
  man.add_input("input", o.input);
  const TokenStream stream = read_token_file(o.input);
  TokenStream corrupted;
  corrupted.doc_boundaries = stream.doc_boundaries;
  corrupted.tokens.reserve(stream.tokens.size());
  SplitMix64 rng(o.seed);
  if (o.generator.empty()) {
    const NoiseConfig noise{o.noise_rate, o.seed};
    for (const Word& word : stream.tokens) {
      corrupted.tokens.push_back(random_errors(word, noise, rng));
    }
    man.set("channel", "random");
  } else {
    man.add_input("generator", o.generator);
    const Seq2SeqModel model = load_checkpoint(o.generator, ModelKind::gru_generator);
    std::size_t degenerate = 0;
    for (const Word& word : stream.tokens) {
      const GeneratedError g = generate_error(model, word, rng, o.greedy);
      degenerate += g.degenerate ? 1 : 0;
      corrupted.tokens.push_back(g.word);
    }
    if (degenerate > 0) {
      log::warn("corrupt: " + std::to_string(degenerate) +
                " degenerate decodes fell back to the input word");
    }
    man.set("channel", o.greedy ? "generator-greedy" : "generator-sampled");
    man.set("degenerate", std::to_string(degenerate));
  }
  write_token_file(corrupted, o.out + "/corrupted.txt");
  man.set("tokens", std::to_string(corrupted.size()));
  man.add_output("corrupted", o.out, "corrupted.txt");
  man.write(o.out);
  log::info("corrupt: " + std::to_string(corrupted.size()) + " tokens");
}

// ---- train-corrector -------------------------------------------------------

struct TrainCorrectorOpts {
  std::string config, input, generator, out;
  double noise_rate = 0.07;
  TransformerConfig cfg;
  TrainOptions opts;
};

void run_train_corrector(TrainCorrectorOpts& o, CLI::App& sub) {
  RunConfig rc("train-corrector", o.config);
  rc.apply("input", o.input, sub.count("--input") > 0);
  rc.apply("generator", o.generator, sub.count("--generator") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("seed", o.cfg.seed, sub.count("--seed") > 0);
  rc.apply("window", o.cfg.window, sub.count("--window") > 0);
  rc.apply("noise_rate", o.noise_rate, sub.count("--noise-rate") > 0);
  rc.apply("layers", o.cfg.layers, sub.count("--layers") > 0);
  rc.apply("heads", o.cfg.heads, sub.count("--heads") > 0);
  rc.apply("d_model", o.cfg.d_model, sub.count("--d-model") > 0);
  rc.apply("d_ff", o.cfg.d_ff, sub.count("--d-ff") > 0);
  rc.apply("dropout", o.cfg.dropout, sub.count("--dropout") > 0);
  rc.apply("lr", o.cfg.lr, sub.count("--lr") > 0);
  rc.apply("batch_size", o.cfg.batch_size, sub.count("--batch-size") > 0);
  rc.apply("max_epochs", o.cfg.max_epochs, sub.count("--max-epochs") > 0);
  rc.apply("min_improve", o.opts.min_improve, sub.count("--min-improve") > 0);
  rc.apply("patience", o.opts.patience, sub.count("--patience") > 0);
  require_cli(!o.input.empty(), "--input is required");
  require_cli(o.cfg.window >= 1 && o.cfg.window % 2 == 1, "--window must be odd and positive");
  require_cli(o.noise_rate >= 0, "--noise-rate must be non-negative");
  require_cli(o.cfg.layers >= 1, "--layers must be at least 1");
  require_cli(o.cfg.heads >= 1, "--heads must be at least 1");
  require_cli(o.cfg.d_model >= 1, "--d-model must be at least 1");
  require_cli(o.cfg.d_model % o.cfg.heads == 0, "--d-model must be divisible by --heads");
  require_cli(o.cfg.d_ff >= 1, "--d-ff must be at least 1");
  require_cli(o.cfg.dropout >= 0 && o.cfg.dropout < 1, "--dropout must lie in [0, 1)");
  require_cli(o.cfg.lr > 0, "--lr must be positive");
  require_cli(o.cfg.batch_size >= 1, "--batch-size must be at least 1");
  require_cli(o.cfg.max_epochs >= 1, "--max-epochs must be at least 1");
  require_cli(o.opts.min_improve >= 0, "--min-improve must be non-negative");
  require_cli(o.opts.patience >= 1, "--patience must be at least 1");
  begin_run(rc, o.out);

  RunManifest man("train-corrector");
  man.add_input("input", o.input);
  const TokenStream stream = read_token_file(o.input);
  o.opts.data_fingerprint = file_fingerprint(o.input);

  Corruptor corruptor;
  if (o.generator.empty()) {
    const NoiseConfig noise{o.noise_rate, 0};
    corruptor = [noise](const Word& word, RandomSource& rng) {
      return random_errors(word, noise, rng);
    };
    man.set("channel", "random");
  } else {
    man.add_input("generator", o.generator);
    auto gen = std::make_shared<Seq2SeqModel>(
        load_checkpoint(o.generator, ModelKind::gru_generator));
    corruptor = [gen](const Word& word, RandomSource& rng) {
      return generate_error(*gen, word, rng, false).word;
    };
    man.set("channel", "generator-sampled");
  }

  const DynamicBatcher batcher(stream, o.cfg.window, corruptor, o.cfg.batch_size);
  const Seq2SeqModel model = train_corrector(batcher, o.cfg, o.opts);
  save_checkpoint(model, o.out + "/corrector.ckpt");
  man.set("samples", std::to_string(batcher.num_samples()));
  man.set("truncated_words", std::to_string(batcher.truncated_words()));
  man.set("epochs_run", std::to_string(model.manifest.loss_history.size()));
  man.set("best_epoch", std::to_string(model.manifest.best_epoch));
  man.add_output("corrector", o.out, "corrector.ckpt");
  man.write(o.out);
  for (std::size_t e = 0; e < model.manifest.loss_history.size(); ++e) {
    log::info("corrector epoch " + std::to_string(e + 1) + " mean loss " +
              fmt(model.manifest.loss_history[e]));
  }
  log::info("train-corrector: kept epoch " + std::to_string(model.manifest.best_epoch));
}

// ---- correct ---------------------------------------------------------------

struct CorrectOpts {
  std::string config, input, model, out;
  int window = 0;  // 0 = use the window stored in the checkpoint
  int beam = 3;
  int threads = 1;
};

void run_correct(CorrectOpts& o, CLI::App& sub) {
  RunConfig rc("correct", o.config);
  rc.apply("input", o.input, sub.count("--input") > 0);
  rc.apply("model", o.model, sub.count("--model") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("window", o.window, sub.count("--window") > 0);
  rc.apply("beam", o.beam, sub.count("--beam") > 0);
  rc.apply("threads", o.threads, sub.count("--threads") > 0);
  require_cli(!o.input.empty(), "--input is required");
  require_cli(!o.model.empty(), "--model is required");
  require_cli(o.beam >= 1, "--beam must be at least 1");
  require_cli(o.threads >= 1, "--threads must be at least 1");
  require_cli(o.window >= 0, "--window must be 0 (checkpoint default) or odd and positive");

  const Seq2SeqModel model = load_checkpoint(o.model, ModelKind::transformer_corrector);
  const int window = o.window == 0 ? model.tcfg.window : o.window;
  rc.note("window", window);
  begin_run(rc, o.out);

  RunManifest man("correct");
  man.add_input("input", o.input);
  man.add_input("model", o.model);
  const TokenStream stream = read_token_file(o.input);
  const TokenStream corrected = correct_tokens(model, stream, window, o.beam, o.threads);
  write_token_file(corrected, o.out + "/corrected.txt");
  man.set("tokens", std::to_string(corrected.size()));
  man.add_output("corrected", o.out, "corrected.txt");
  man.write(o.out);
  log::info("correct: " + std::to_string(corrected.size()) + " tokens");
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOpts {
  std::string config, gt, model, lexicon, out, engine;
  std::string delimiter = ",";
  bool post = true;
  int window = 0;  // 0 = use the window stored in the checkpoint
  int beam = 3;
  int threads = 1;
};

void run_evaluate(EvaluateOpts& o, CLI::App& sub, const CLI::Option* post_opt) {
  RunConfig rc("evaluate", o.config);
  rc.apply("gt", o.gt, sub.count("--gt") > 0);
  rc.apply("model", o.model, sub.count("--model") > 0);
  rc.apply("lexicon", o.lexicon, sub.count("--lexicon") > 0);
  rc.apply("out", o.out, sub.count("--out") > 0);
  rc.apply("engine", o.engine, sub.count("--engine") > 0);
  rc.apply("delimiter", o.delimiter, sub.count("--delimiter") > 0);
  rc.apply("post", o.post, post_opt->count() > 0);
  rc.apply("window", o.window, sub.count("--window") > 0);
  rc.apply("beam", o.beam, sub.count("--beam") > 0);
  rc.apply("threads", o.threads, sub.count("--threads") > 0);
  require_cli(!o.gt.empty(), "--gt is required");
  require_cli(!o.model.empty(), "--model is required");
  require_cli(!o.lexicon.empty(), "--lexicon is required");
  require_cli(!o.engine.empty(), "--engine is required");
  require_cli(o.delimiter.size() == 1, "--delimiter must be a single character");
  require_cli(o.beam >= 1, "--beam must be at least 1");
  require_cli(o.threads >= 1, "--threads must be at least 1");
  require_cli(o.window >= 0, "--window must be 0 (checkpoint default) or odd and positive");

  const Seq2SeqModel model = load_checkpoint(o.model, ModelKind::transformer_corrector);
  const int window = o.window == 0 ? model.tcfg.window : o.window;
  rc.note("window", window);
  begin_run(rc, o.out);

  RunManifest man("evaluate");
  man.add_input("gt", o.gt);
  man.add_input("model", o.model);
  man.add_input("lexicon", o.lexicon);
  const Lexicon lex = load_wordlist(o.lexicon);
  const GtTable table = load_gt_table(o.gt, o.delimiter[0]);
  const EvalRun run = evaluate_run(table, o.engine, model, lex, window, o.post, o.beam, o.threads);
  if (std::abs(run.report.overall_acc - recompose_overall(run.report)) >= 1e-9) {
    throw NumericError("accuracy recomposition identity violated");
  }
  const std::string report_text = format_report(run.report);
  spew(o.out + "/report.txt", report_text);
  write_audit_tsv(o.out + "/audit.tsv", run.records);
  man.set("rows", std::to_string(table.rows.size()));
  man.set("rows_dropped_non_alphabet", std::to_string(table.dropped_non_alphabet));
  man.set("rows_dropped_blank", std::to_string(table.dropped_blank));
  man.set("rows_malformed", std::to_string(table.malformed));
  man.add_output("report", o.out, "report.txt");
  man.add_output("audit", o.out, "audit.tsv");
  man.write(o.out);
  std::cout << report_text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised OCR post-correction: corpus cleaning, embedding-based pair "
               "extraction, error-channel training and character-level correction."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ocrrestore 1.0.0");

  auto clean_opts = std::make_shared<CleanOpts>();
  CLI::App* clean = app.add_subcommand("clean", "Normalize raw text into a token-stream file");
  clean->add_option("--config", clean_opts->config, "JSON config file");
  clean->add_option("--input", clean_opts->input, "raw UTF-8 text file");
  clean->add_option("--out", clean_opts->out, "output directory");
  clean->callback([clean_opts, clean] { run_clean(*clean_opts, *clean); });

  auto emb_opts = std::make_shared<TrainEmbeddingsOpts>();
  CLI::App* emb = app.add_subcommand("train-embeddings",
                                     "Train skip-gram word embeddings on a token stream");
  emb->add_option("--config", emb_opts->config, "JSON config file");
  emb->add_option("--input", emb_opts->input, "token-stream file");
  emb->add_option("--out", emb_opts->out, "output directory");
  emb->add_option("--seed", emb_opts->cfg.seed, "random seed");
  emb->add_option("--dim", emb_opts->cfg.dim, "embedding dimension");
  emb->add_option("--window", emb_opts->cfg.window, "context window (words each side)");
  emb->add_option("--negatives", emb_opts->cfg.negatives, "negative samples per pair");
  emb->add_option("--epochs", emb_opts->cfg.epochs, "training epochs");
  emb->add_option("--min-count", emb_opts->cfg.min_count, "vocabulary frequency cutoff");
  emb->add_option("--learning-rate", emb_opts->cfg.learning_rate, "initial learning rate");
  emb->callback([emb_opts, emb] { run_train_embeddings(*emb_opts, *emb); });

  auto pairs_opts = std::make_shared<ExtractPairsOpts>();
  CLI::App* pairs = app.add_subcommand(
      "extract-pairs", "Mine (error, correct) training pairs from embedding neighborhoods");
  pairs->add_option("--config", pairs_opts->config, "JSON config file");
  pairs->add_option("--embeddings", pairs_opts->embeddings, "embedding checkpoint");
  pairs->add_option("--neighbor-table", pairs_opts->neighbor_table,
                    "precomputed neighbor TSV (external embeddings)");
  pairs->add_option("--lexicon", pairs_opts->lexicon, "word-list file");
  pairs->add_option("--out", pairs_opts->out, "output directory");
  pairs->add_option("--neighbors-k", pairs_opts->cfg.neighbors_k, "neighbors per anchor");
  pairs->add_option("--max-edit-distance", pairs_opts->cfg.max_edit_distance,
                    "pairing distance cap");
  pairs->add_option("--min-word-len", pairs_opts->cfg.min_word_len, "minimum word length");
  pairs->add_flag("--anchor-only", pairs_opts->cfg.anchor_only,
                  "pair errors with their anchor word only");
  pairs->callback([pairs_opts, pairs] { run_extract_pairs(*pairs_opts, *pairs); });

  auto gen_opts = std::make_shared<TrainGeneratorOpts>();
  CLI::App* gen = app.add_subcommand("train-generator",
                                     "Train the recurrent error generator on extracted pairs");
  gen->add_option("--config", gen_opts->config, "JSON config file");
  gen->add_option("--pairs", gen_opts->pairs, "pairs TSV file");
  gen->add_option("--out", gen_opts->out, "output directory");
  gen->add_option("--seed", gen_opts->cfg.seed, "random seed");
  gen->add_option("--emb-dim", gen_opts->cfg.emb_dim, "character embedding dimension");
  gen->add_option("--hidden", gen_opts->cfg.hidden, "recurrent hidden size");
  gen->add_option("--lr", gen_opts->cfg.lr, "learning rate");
  gen->add_option("--batch-size", gen_opts->cfg.batch_size, "batch size");
  gen->add_option("--max-epochs", gen_opts->cfg.max_epochs, "epoch cap");
  gen->add_option("--teacher-forcing", gen_opts->cfg.teacher_forcing,
                  "per-character gold-input probability");
  gen->add_option("--min-improve", gen_opts->opts.min_improve, "early-stop improvement threshold");
  gen->add_option("--patience", gen_opts->opts.patience, "early-stop patience (epochs)");
  gen->callback([gen_opts, gen] { run_train_generator(*gen_opts, *gen); });

  auto corrupt_opts = std::make_shared<CorruptOpts>();
  CLI::App* corrupt = app.add_subcommand(
      "corrupt", "Corrupt a token stream with the random or the trained error channel");
  corrupt->add_option("--config", corrupt_opts->config, "JSON config file");
  corrupt->add_option("--input", corrupt_opts->input, "token-stream file");
  corrupt->add_option("--generator", corrupt_opts->generator,
                      "generator checkpoint (omit for the random channel)");
  corrupt->add_option("--out", corrupt_opts->out, "output directory");
  corrupt->add_option("--seed", corrupt_opts->seed, "random seed");
  corrupt->add_option("--noise-rate", corrupt_opts->noise_rate,
                      "per-letter action rate of the random channel");
  corrupt->add_flag("--greedy", corrupt_opts->greedy, "argmax decoding for the generator channel");
  corrupt->callback([corrupt_opts, corrupt] { run_corrupt(*corrupt_opts, *corrupt); });

  auto corr_opts = std::make_shared<TrainCorrectorOpts>();
  CLI::App* corr = app.add_subcommand(
      "train-corrector", "Train the context-windowed character transformer corrector");
  corr->add_option("--config", corr_opts->config, "JSON config file");
  corr->add_option("--input", corr_opts->input, "clean token-stream file");
  corr->add_option("--generator", corr_opts->generator,
                   "generator checkpoint (omit for the random channel)");
  corr->add_option("--out", corr_opts->out, "output directory");
  corr->add_option("--seed", corr_opts->cfg.seed, "random seed");
  corr->add_option("--window", corr_opts->cfg.window, "word window (odd)");
  corr->add_option("--noise-rate", corr_opts->noise_rate,
                   "per-letter action rate of the random channel");
  corr->add_option("--layers", corr_opts->cfg.layers, "encoder and decoder layers");
  corr->add_option("--heads", corr_opts->cfg.heads, "attention heads");
  corr->add_option("--d-model", corr_opts->cfg.d_model, "model width");
  corr->add_option("--d-ff", corr_opts->cfg.d_ff, "feed-forward width");
  corr->add_option("--dropout", corr_opts->cfg.dropout, "dropout rate");
  corr->add_option("--lr", corr_opts->cfg.lr, "learning rate");
  corr->add_option("--batch-size", corr_opts->cfg.batch_size, "batch size");
  corr->add_option("--max-epochs", corr_opts->cfg.max_epochs, "epoch cap");
  corr->add_option("--min-improve", corr_opts->opts.min_improve,
                   "early-stop improvement threshold");
  corr->add_option("--patience", corr_opts->opts.patience, "early-stop patience (epochs)");
  corr->callback([corr_opts, corr] { run_train_corrector(*corr_opts, *corr); });

  auto correct_opts = std::make_shared<CorrectOpts>();
  CLI::App* correct = app.add_subcommand("correct", "Correct a token stream with a trained model");
  correct->add_option("--config", correct_opts->config, "JSON config file");
  correct->add_option("--input", correct_opts->input, "token-stream file");
  correct->add_option("--model", correct_opts->model, "corrector checkpoint");
  correct->add_option("--out", correct_opts->out, "output directory");
  correct->add_option("--window", correct_opts->window,
                      "word window (must match the checkpoint; 0 = use the checkpoint's)");
  correct->add_option("--beam", correct_opts->beam, "beam width");
  correct->add_option("--threads", correct_opts->threads, "worker threads");
  correct->callback([correct_opts, correct] { run_correct(*correct_opts, *correct); });

  auto eval_opts = std::make_shared<EvaluateOpts>();
  CLI::App* eval = app.add_subcommand(
      "evaluate", "Score a corrector against a ground-truth-aligned OCR table");
  eval->add_option("--config", eval_opts->config, "JSON config file");
  eval->add_option("--gt", eval_opts->gt, "aligned ground-truth table (delimited text)");
  eval->add_option("--model", eval_opts->model, "corrector checkpoint");
  eval->add_option("--lexicon", eval_opts->lexicon, "word-list file");
  eval->add_option("--out", eval_opts->out, "output directory");
  eval->add_option("--engine", eval_opts->engine, "OCR column to score: TESSERACT, OLD or FR11");
  eval->add_option("--delimiter", eval_opts->delimiter, "table delimiter (default ',')");
  const CLI::Option* post_opt =
      eval->add_flag("--post,!--no-post", eval_opts->post,
                     "apply lexicon fallback and v->w rewriting (default on)");
  eval->add_option("--window", eval_opts->window,
                   "word window (must match the checkpoint; 0 = use the checkpoint's)");
  eval->add_option("--beam", eval_opts->beam, "beam width");
  eval->add_option("--threads", eval_opts->threads, "worker threads");
  eval->callback(
      [eval_opts, eval, post_opt] { run_evaluate(*eval_opts, *eval, post_opt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
