#pragma once

#include <map>
#include <string>
#include <vector>

#include "ocrrestore/embedding.hpp"
#include "ocrrestore/models.hpp"

namespace ocrrestore {

// On-disk container shared by all trained models:
//   magic "OCRRCKPT" | u32 version | u64 header_len | header text
//   | u64 payload_len | raw little-endian float32 blocks | u64 FNV-1a digest
// The header is canonical key-sorted `key=value` lines, so identical models
// serialize to identical bytes. The digest covers header + payload.
constexpr char kCheckpointMagic[8] = {'O', 'C', 'R', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::map<std::string, std::string> header;
  std::vector<float> payload;
};

void write_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

// Seq2seq models (corrector / generator).
void save_checkpoint(const Seq2SeqModel& model, const std::string& path);
Seq2SeqModel load_checkpoint(const std::string& path);
// Kind-checked load: rejects e.g. a generator checkpoint where a corrector
// is required.
Seq2SeqModel load_checkpoint(const std::string& path, ModelKind required);

// Word embeddings ride the same container (kind "sgns_embedding").
void save_embedding(const EmbeddingModel& model, const SgnsConfig& cfg, const std::string& path);
std::pair<EmbeddingModel, SgnsConfig> load_embedding(const std::string& path);

}  // namespace ocrrestore
