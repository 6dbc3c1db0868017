#include "ocrrestore/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ocrrestore/digest.hpp"
#include "ocrrestore/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace ocrrestore {

namespace {

std::string render_header(const std::map<std::string, std::string>& header) {
  std::ostringstream out;
  for (const auto& [k, v] : header) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw DataError("checkpoint header entry contains a forbidden character: " + k);
    }
    out << k << '=' << v << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
  std::map<std::string, std::string> header;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("corrupt checkpoint: malformed header line");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return header;
}

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw DataError("corrupt checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof v);
  off += sizeof v;
  return v;
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

const std::string& expect(const std::map<std::string, std::string>& h, const std::string& key) {
  auto it = h.find(key);
  if (it == h.end()) throw DataError("corrupt checkpoint: missing header key " + key);
  return it->second;
}

std::string index_key(const char* prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return std::string(prefix) + buf;
}

void header_put_params(CheckpointData& data, const neural::ParamStore<float>& ps) {
  data.header["params.count"] = std::to_string(ps.entries().size());
  std::size_t i = 0;
  for (const auto& e : ps.entries()) {
    std::string shape;
    for (std::size_t dj = 0; dj < e.value.shape.size(); ++dj) {
      if (dj) shape += 'x';
      shape += std::to_string(e.value.shape[dj]);
    }
    data.header[index_key("params.", i) + ".name"] = e.name;
    data.header[index_key("params.", i) + ".shape"] = shape;
    data.payload.insert(data.payload.end(), e.value.data.begin(), e.value.data.end());
    ++i;
  }
}

void header_take_params(const CheckpointData& data, neural::ParamStore<float>& ps) {
  const std::size_t count = std::stoull(expect(data.header, "params.count"));
  std::size_t off = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = expect(data.header, index_key("params.", i) + ".name");
    const std::string shape_str = expect(data.header, index_key("params.", i) + ".shape");
    std::vector<neural::Index> shape;
    std::istringstream ss(shape_str);
    std::string part;
    while (std::getline(ss, part, 'x')) shape.push_back(std::stoll(part));
    neural::Tensor<float> t(shape);
    if (off + t.data.size() > data.payload.size()) {
      throw DataError("corrupt checkpoint: parameter payload shorter than declared");
    }
    std::copy(data.payload.begin() + static_cast<std::ptrdiff_t>(off),
              data.payload.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()),
              t.data.begin());
    off += t.data.size();
    ps.add(name, std::move(t));
  }
  if (off != data.payload.size()) {
    throw DataError("corrupt checkpoint: parameter payload longer than declared");
  }
}

void header_put_manifest(CheckpointData& data, const ModelManifest& m) {
  data.header["manifest.seed"] = std::to_string(m.seed);
  data.header["manifest.data_fingerprint"] = m.data_fingerprint;
  data.header["manifest.checkpoint_policy"] = m.checkpoint_policy;
  data.header["manifest.best_epoch"] = std::to_string(m.best_epoch);
  std::string losses;
  for (std::size_t i = 0; i < m.loss_history.size(); ++i) {
    if (i) losses += ',';
    losses += fmt_double(m.loss_history[i]);
  }
  data.header["manifest.loss_history"] = losses;
}

ModelManifest header_take_manifest(const CheckpointData& data) {
  ModelManifest m;
  m.seed = std::stoull(expect(data.header, "manifest.seed"));
  m.data_fingerprint = expect(data.header, "manifest.data_fingerprint");
  m.checkpoint_policy = expect(data.header, "manifest.checkpoint_policy");
  m.best_epoch = std::stoi(expect(data.header, "manifest.best_epoch"));
  const std::string& losses = expect(data.header, "manifest.loss_history");
  std::istringstream ss(losses);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) m.loss_history.push_back(std::stod(part));
  }
  return m;
}

}  // namespace

void write_checkpoint_file(const std::string& path, const CheckpointData& data) {
  const std::string header = render_header(data.header);
  std::string body;
  body.append(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(body, kCheckpointVersion);
  put_u64(body, header.size());
  body += header;
  put_u64(body, data.payload.size() * sizeof(float));
  const std::size_t digest_start = sizeof kCheckpointMagic + sizeof(std::uint32_t);
  body.append(reinterpret_cast<const char*>(data.payload.data()),
              data.payload.size() * sizeof(float));
  const std::uint64_t digest = fnv1a64(body.data() + digest_start, body.size() - digest_start);
  put_u64(body, digest);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw DataError("failed while writing checkpoint: " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string body = buf.str();

  std::size_t off = 0;
  if (body.size() < sizeof kCheckpointMagic ||
      std::memcmp(body.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw DataError("corrupt checkpoint: bad magic in " + path);
  }
  off += sizeof kCheckpointMagic;
  const auto version = take<std::uint32_t>(body, off);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t digest_start = off;
  const auto header_len = take<std::uint64_t>(body, off);
  if (off + header_len > body.size()) throw DataError("corrupt checkpoint: truncated header");
  const std::string header_text = body.substr(off, header_len);
  off += header_len;
  const auto payload_len = take<std::uint64_t>(body, off);
  if (payload_len % sizeof(float) != 0 || off + payload_len > body.size()) {
    throw DataError("corrupt checkpoint: truncated payload");
  }
  CheckpointData data;
  data.payload.resize(payload_len / sizeof(float));
  std::memcpy(data.payload.data(), body.data() + off, payload_len);
  off += payload_len;
  const std::uint64_t expected = fnv1a64(body.data() + digest_start, off - digest_start);
  const auto stored = take<std::uint64_t>(body, off);
  if (stored != expected) throw DataError("corrupt checkpoint: digest mismatch in " + path);
  if (off != body.size()) throw DataError("corrupt checkpoint: trailing bytes in " + path);
  data.header = parse_header(header_text);
  return data;
}

void save_checkpoint(const Seq2SeqModel& model, const std::string& path) {
  CheckpointData data;
  data.header["kind"] = kind_name(model.kind);
  const CharVocab& vocab = CharVocab::instance();
  data.header["vocab.size"] = std::to_string(vocab.size());
  for (int i = 0; i < vocab.size(); ++i) {
    data.header[index_key("vocab.", static_cast<std::size_t>(i))] = vocab.name_of(i);
  }
  if (model.kind == ModelKind::transformer_corrector) {
    const TransformerConfig& c = model.tcfg;
    data.header["config.layers"] = std::to_string(c.layers);
    data.header["config.heads"] = std::to_string(c.heads);
    data.header["config.d_model"] = std::to_string(c.d_model);
    data.header["config.d_ff"] = std::to_string(c.d_ff);
    data.header["config.dropout"] = fmt_double(c.dropout);
    data.header["config.lr"] = fmt_double(c.lr);
    data.header["config.batch_size"] = std::to_string(c.batch_size);
    data.header["config.max_epochs"] = std::to_string(c.max_epochs);
    data.header["config.window"] = std::to_string(c.window);
    data.header["config.seed"] = std::to_string(c.seed);
  } else if (model.kind == ModelKind::gru_generator) {
    const GruConfig& c = model.gcfg;
    data.header["config.emb_dim"] = std::to_string(c.emb_dim);
    data.header["config.hidden"] = std::to_string(c.hidden);
    data.header["config.lr"] = fmt_double(c.lr);
    data.header["config.batch_size"] = std::to_string(c.batch_size);
    data.header["config.max_epochs"] = std::to_string(c.max_epochs);
    data.header["config.teacher_forcing"] = fmt_double(c.teacher_forcing);
    data.header["config.seed"] = std::to_string(c.seed);
  } else {
    throw UsageError("save_checkpoint handles seq2seq models; embeddings use save_embedding");
  }
  header_put_manifest(data, model.manifest);
  header_put_params(data, model.params);
  write_checkpoint_file(path, data);
}

Seq2SeqModel load_checkpoint(const std::string& path) {
  const CheckpointData data = read_checkpoint_file(path);
  Seq2SeqModel model;
  model.kind = kind_from_name(expect(data.header, "kind"));
  if (model.kind != ModelKind::transformer_corrector && model.kind != ModelKind::gru_generator) {
    throw DataError("checkpoint holds an embedding model; use load_embedding");
  }
  const CharVocab& vocab = CharVocab::instance();
  if (std::stoi(expect(data.header, "vocab.size")) != vocab.size()) {
    throw DataError("checkpoint vocabulary size does not match this build");
  }
  if (model.kind == ModelKind::transformer_corrector) {
    TransformerConfig& c = model.tcfg;
    c.layers = std::stoi(expect(data.header, "config.layers"));
    c.heads = std::stoi(expect(data.header, "config.heads"));
    c.d_model = std::stoi(expect(data.header, "config.d_model"));
    c.d_ff = std::stoi(expect(data.header, "config.d_ff"));
    c.dropout = std::stod(expect(data.header, "config.dropout"));
    c.lr = std::stod(expect(data.header, "config.lr"));
    c.batch_size = std::stoi(expect(data.header, "config.batch_size"));
    c.max_epochs = std::stoi(expect(data.header, "config.max_epochs"));
    c.window = std::stoi(expect(data.header, "config.window"));
    c.seed = std::stoull(expect(data.header, "config.seed"));
  } else if (model.kind == ModelKind::gru_generator) {
    GruConfig& c = model.gcfg;
    c.emb_dim = std::stoi(expect(data.header, "config.emb_dim"));
    c.hidden = std::stoi(expect(data.header, "config.hidden"));
    c.lr = std::stod(expect(data.header, "config.lr"));
    c.batch_size = std::stoi(expect(data.header, "config.batch_size"));
    c.max_epochs = std::stoi(expect(data.header, "config.max_epochs"));
    c.teacher_forcing = std::stod(expect(data.header, "config.teacher_forcing"));
    c.seed = std::stoull(expect(data.header, "config.seed"));
  }
  model.manifest = header_take_manifest(data);
  header_take_params(data, model.params);
  return model;
}

Seq2SeqModel load_checkpoint(const std::string& path, ModelKind required) {
  Seq2SeqModel model = load_checkpoint(path);
  if (model.kind != required) {
    throw DataError("model kind mismatch: " + path + " holds a " + kind_name(model.kind) +
                    ", expected a " + kind_name(required));
  }
  return model;
}

void save_embedding(const EmbeddingModel& model, const SgnsConfig& cfg, const std::string& path) {
  CheckpointData data;
  data.header["kind"] = kind_name(ModelKind::sgns_embedding);
  data.header["config.dim"] = std::to_string(cfg.dim);
  data.header["config.window"] = std::to_string(cfg.window);
  data.header["config.negatives"] = std::to_string(cfg.negatives);
  data.header["config.epochs"] = std::to_string(cfg.epochs);
  data.header["config.min_count"] = std::to_string(cfg.min_count);
  data.header["config.learning_rate"] = fmt_double(cfg.learning_rate);
  data.header["config.seed"] = std::to_string(cfg.seed);
  data.header["vocab.size"] = std::to_string(model.words.size());
  for (std::size_t i = 0; i < model.words.size(); ++i) {
    data.header[index_key("vocab.", i)] = utf8_encode(model.words[i]);
  }
  std::string losses;
  for (std::size_t i = 0; i < model.epoch_losses.size(); ++i) {
    if (i) losses += ',';
    losses += fmt_double(model.epoch_losses[i]);
  }
  data.header["manifest.loss_history"] = losses;
  data.header["params.count"] = "1";
  data.header["params.000000.name"] = "vectors";
  data.header["params.000000.shape"] =
      std::to_string(model.words.size()) + "x" + std::to_string(model.dim);
  data.payload.assign(model.vectors.data.begin(), model.vectors.data.end());
  write_checkpoint_file(path, data);
}

std::pair<EmbeddingModel, SgnsConfig> load_embedding(const std::string& path) {
  const CheckpointData data = read_checkpoint_file(path);
  if (kind_from_name(expect(data.header, "kind")) != ModelKind::sgns_embedding) {
    throw DataError("model kind mismatch: " + path + " does not hold word embeddings");
  }
  SgnsConfig cfg;
  cfg.dim = std::stoi(expect(data.header, "config.dim"));
  cfg.window = std::stoi(expect(data.header, "config.window"));
  cfg.negatives = std::stoi(expect(data.header, "config.negatives"));
  cfg.epochs = std::stoi(expect(data.header, "config.epochs"));
  cfg.min_count = std::stoi(expect(data.header, "config.min_count"));
  cfg.learning_rate = std::stod(expect(data.header, "config.learning_rate"));
  cfg.seed = std::stoull(expect(data.header, "config.seed"));

  EmbeddingModel model;
  model.dim = cfg.dim;
  const std::size_t vocab_size = std::stoull(expect(data.header, "vocab.size"));
  model.words.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const Word w = utf8_decode(expect(data.header, index_key("vocab.", i)));
    model.index[w] = static_cast<int>(i);
    model.words.push_back(w);
  }
  const std::string& losses = expect(data.header, "manifest.loss_history");
  std::istringstream ss(losses);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) model.epoch_losses.push_back(std::stod(part));
  }
  if (data.payload.size() != vocab_size * static_cast<std::size_t>(cfg.dim)) {
    throw DataError("corrupt checkpoint: embedding payload size mismatch");
  }
  model.vectors =
      neural::Tensor<float>({static_cast<neural::Index>(vocab_size), cfg.dim});
  std::copy(data.payload.begin(), data.payload.end(), model.vectors.data.begin());
  return {std::move(model), cfg};
}

}  // namespace ocrrestore
