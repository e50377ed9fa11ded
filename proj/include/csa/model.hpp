#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "csa/attention.hpp"
#include "csa/config.hpp"
#include "csa/csa.hpp"
#include "csa/data.hpp"
#include "csa/ops.hpp"
#include "csa/tensor.hpp"

namespace csa {

// Post-norm Transformer decoder layer: causal self-attention, cross-attention
// over the encoder memory, then the feed-forward block.
struct DecoderLayerParams {
  MultiHeadParams self_mha;
  Tensor ln1_gain, ln1_bias;
  MultiHeadParams cross_mha;
  Tensor ln2_gain, ln2_bias;
  PfnParams ffn;

  static DecoderLayerParams init(int heads, int d_model, int d_hidden, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerParams& p,
                     const MaskMat& self_keep, const MaskMat& memory_keep, const RunCtx& ctx = {});

// Every component is initialized for every variant so checkpoints share one
// layout; a variant simply leaves its unused parts untouched.
struct QsummParams {
  Tensor embedding;  // [vocab x d]
  std::vector<EncoderLayerParams> block_layers;  // shared across blocks
  S2tParams block_s2t;
  std::vector<EncoderLayerParams> post_block_layers;
  std::vector<EncoderLayerParams> query_layers;
  S2tParams query_s2t;
  CsaParams csa;
  std::vector<EncoderLayerParams> post_csa_layers;
  std::vector<DecoderLayerParams> dec_layers;  // token decoder
  Tensor out_w;  // [vocab x d]
  Tensor out_b;  // [vocab]
  std::vector<EncoderLayerParams> ext_layers;  // selection decoder
  Tensor ext_w;  // [d]
  Tensor ext_b;  // scalar

  static QsummParams init(const ModelConfig& config, std::mt19937_64& rng);
  void register_into(ParamMap& pm);
};

// One instance, already padded and masked; masks are 1 on real tokens. Flat
// passage fields serve fixed-length blocking, the sentence grid serves
// sentence blocking.
struct ModelInput {
  std::vector<int> passage_ids;
  std::vector<std::uint8_t> passage_mask;
  std::vector<std::vector<int>> sentence_ids;
  std::vector<std::vector<std::uint8_t>> sentence_mask;
  std::vector<std::uint8_t> sentence_present;
  std::vector<int> query_ids;
  std::vector<std::uint8_t> query_mask;
};

ModelInput input_from_batch(const Batch& batch, std::size_t row);

// Unpadded single-instance encoding (empty masks mean fully live).
ModelInput input_from_instance(const Vocab& vocab, const QsummInstance& instance);
// BOS ... EOS framed summary ids.
std::vector<int> target_from_instance(const Vocab& vocab, const QsummInstance& instance);

struct ModelOutput {
  Tensor u;  // [n_blocks x d] conditioned block states
  int n_blocks = 0;
  // Leading non-content blocks (the prepended query block of the concat
  // variant); selection and labels cover rows [block_offset, n_blocks).
  int block_offset = 0;
  Tensor p;                          // condition scores; conditional variants only
  std::vector<Tensor> head_weights;  // per-head attention maps; conditional variants only
};

// Hierarchical encoder + query conditioning for the configured variant.
ModelOutput model_encode(const ModelConfig& config, const QsummParams& params,
                         const ModelInput& input, const RunCtx& ctx = {});

// Query tokens -> condition vector.
Tensor encode_query_vec(const ModelConfig& config, const QsummParams& params,
                        const std::vector<int>& ids, const std::vector<std::uint8_t>& mask,
                        const RunCtx& ctx = {});

// Teacher-forced token loss over a BOS ... EOS framed target row.
Tensor abstractive_loss(const ModelConfig& config, const QsummParams& params,
                        const ModelOutput& encoded, const std::vector<int>& target_ids,
                        const std::vector<std::uint8_t>& target_mask, const RunCtx& ctx = {});

// Greedy argmax decode, capped at max_decode_len; returns content token ids.
std::vector<int> greedy_decode(const ModelConfig& config, const QsummParams& params,
                               const ModelOutput& encoded);

struct ExtractiveResult {
  Tensor probs;               // [n_content]
  std::vector<int> selected;  // content indices with prob strictly above threshold
};

ExtractiveResult extractive_decode(const ModelConfig& config, const QsummParams& params,
                                   const ModelOutput& encoded, const RunCtx& ctx = {});

// Mean per-sentence binary cross-entropy; labels cover the content blocks.
Tensor extractive_loss(const ModelConfig& config, const QsummParams& params,
                       const ModelOutput& encoded, const std::vector<std::uint8_t>& labels,
                       const RunCtx& ctx = {});

}  // namespace csa
