#pragma once

#include <string>

namespace csa {

// How the passage splits into blocks: fixed token windows (length 1 recovers
// token-level conditioning, a large length a single block) or one block per
// sentence.
enum class BlockMode { FixedLength, Sentence };

enum class DecoderMode { Abstractive, Extractive };

// CsaMul/CsaAdd condition on the query through conditional self-attention;
// Concat prepends query + separator to the passage; AddBaseline adds the query
// vector to every block vector; Transformer ignores the query.
enum class ModelVariant { CsaMul, CsaAdd, Concat, AddBaseline, Transformer };

struct ModelConfig {
  int vocab_size = 5;
  int d_model = 64;  // embedding, hidden, and condition width
  int d_w = 16;      // conditional-attention inner width
  int d_ffn = 128;
  BlockMode block_mode = BlockMode::FixedLength;
  int block_len = 10;
  int layers_pre_block = 1;
  int layers_post_block = 0;
  int layers_query = 1;
  int layers_post_csa = 1;
  int decoder_layers = 2;
  int csa_heads = 4;
  int sa_heads = 4;
  ModelVariant variant = ModelVariant::CsaAdd;
  DecoderMode decoder = DecoderMode::Abstractive;
  double threshold = 0.25;
  double dropout = 0.0;
  bool token_pos_enc = true;
  bool block_pos_enc = true;
  bool force_top1 = false;
  int max_decode_len = 16;
};

// Positive dimensions, threshold in (0,1), dropout in [0,1); contract error
// otherwise.
void validate(const ModelConfig& config);

std::string to_string(ModelVariant v);
std::string to_string(BlockMode m);
std::string to_string(DecoderMode m);
ModelVariant variant_from_string(const std::string& s);
BlockMode block_mode_from_string(const std::string& s);
DecoderMode decoder_mode_from_string(const std::string& s);

// Versioned key-value text file; doubles round-trip exactly.
void save_config(const std::string& path, const ModelConfig& config);
ModelConfig load_config(const std::string& path);

// Defaults sized for short-passage abstractive data.
ModelConfig abstractive_preset();
// Defaults sized for multi-sentence extractive data.
ModelConfig extractive_preset();

}  // namespace csa
