#include "csa/model.hpp"

#include <algorithm>
#include <cmath>

#include "csa/error.hpp"

namespace csa {
namespace {

MaskVec all_live(int n) { return MaskVec::Constant(n, true); }

MaskVec mask_from(const std::vector<std::uint8_t>& mask, std::size_t n) {
  MaskVec keep(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) keep(static_cast<Eigen::Index>(i)) = mask.empty() || mask[i] != 0;
  return keep;
}

Tensor row_vector_param(int d, std::mt19937_64& rng) {
  const double lim = std::sqrt(6.0 / (1.0 + d));
  return uniform({d}, -lim, lim, rng, true);
}

Tensor embed_rows(const QsummParams& params, const std::vector<int>& ids) {
  const int vocab = params.embedding.rows();
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw DataError("unknown token id " + std::to_string(id) + " for vocabulary of " +
                      std::to_string(vocab));
  return gather_rows(params.embedding, ids);
}

std::vector<int> live_ids(const std::vector<int>& ids, const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return ids;
  std::vector<int> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (mask[i]) out.push_back(ids[i]);
  return out;
}

struct BlockSpec {
  std::vector<int> ids;
  MaskVec keep;
};

std::vector<BlockSpec> build_blocks(const ModelConfig& cfg, const ModelInput& input,
                                    const std::vector<int>& prepend) {
  std::vector<BlockSpec> blocks;
  if (cfg.block_mode == BlockMode::Sentence) {
    if (!prepend.empty()) blocks.push_back({prepend, all_live(static_cast<int>(prepend.size()))});
    for (std::size_t s = 0; s < input.sentence_ids.size(); ++s) {
      if (!input.sentence_present.empty() && !input.sentence_present[s]) continue;
      MaskVec keep = mask_from(input.sentence_mask.empty() ? std::vector<std::uint8_t>{}
                                                           : input.sentence_mask[s],
                               input.sentence_ids[s].size());
      if (!keep.any())
        throw DataError("block " + std::to_string(s) + " is empty");
      blocks.push_back({input.sentence_ids[s], std::move(keep)});
    }
  } else {
    std::vector<int> ids = prepend;
    std::vector<std::uint8_t> mask(prepend.size(), 1);
    for (std::size_t i = 0; i < input.passage_ids.size(); ++i) {
      ids.push_back(input.passage_ids[i]);
      mask.push_back(input.passage_mask.empty() ? 1 : input.passage_mask[i]);
    }
    for (std::size_t start = 0; start < ids.size();
         start += static_cast<std::size_t>(cfg.block_len)) {
      const std::size_t stop =
          std::min(ids.size(), start + static_cast<std::size_t>(cfg.block_len));
      BlockSpec block;
      block.ids.assign(ids.begin() + static_cast<long>(start), ids.begin() + static_cast<long>(stop));
      block.keep = mask_from(std::vector<std::uint8_t>(mask.begin() + static_cast<long>(start),
                                                       mask.begin() + static_cast<long>(stop)),
                             block.ids.size());
      if (block.keep.any()) blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

Tensor with_positions(const Tensor& x, bool enabled) {
  if (!enabled) return x;
  return add(x, sinusoidal_encoding(x.rows(), x.cols()));
}

Tensor selection_probs(const ModelConfig& cfg, const QsummParams& params,
                       const ModelOutput& encoded, const RunCtx& ctx) {
  Tensor x = encoded.u;
  const int n = encoded.n_blocks;
  for (const EncoderLayerParams& layer : params.ext_layers)
    x = encoder_layer(x, layer, full_square(n), ctx);
  const int n_content = n - encoded.block_offset;
  if (n_content < 1) throw ContractError("no content blocks to select from");
  if (encoded.block_offset > 0) x = slice_rows(x, encoded.block_offset, n_content);
  return sigmoid(add_scalar(matvec(x, params.ext_w), params.ext_b));
}

}  // namespace

DecoderLayerParams DecoderLayerParams::init(int heads, int d_model, int d_hidden,
                                            std::mt19937_64& rng) {
  DecoderLayerParams p;
  const int d_head = std::max(1, d_model / heads);
  p.self_mha = MultiHeadParams::init(heads, d_model, d_head, rng);
  p.ln1_gain = Tensor::full({d_model}, 1.0, true);
  p.ln1_bias = Tensor::zeros({d_model}, true);
  p.cross_mha = MultiHeadParams::init(heads, d_model, d_head, rng);
  p.ln2_gain = Tensor::full({d_model}, 1.0, true);
  p.ln2_bias = Tensor::zeros({d_model}, true);
  p.ffn = PfnParams::init(d_model, d_hidden, rng);
  return p;
}

void DecoderLayerParams::register_into(ParamMap& pm, const std::string& prefix) {
  self_mha.register_into(pm, prefix + "self.");
  pm.add(prefix + "ln1.gain", ln1_gain);
  pm.add(prefix + "ln1.bias", ln1_bias);
  cross_mha.register_into(pm, prefix + "cross.");
  pm.add(prefix + "ln2.gain", ln2_gain);
  pm.add(prefix + "ln2.bias", ln2_bias);
  ffn.register_into(pm, prefix + "ffn.");
}

Tensor decoder_layer(const Tensor& x, const Tensor& memory, const DecoderLayerParams& p,
                     const MaskMat& self_keep, const MaskMat& memory_keep, const RunCtx& ctx) {
  Tensor a = multi_head_attention(x, x, p.self_mha, self_keep);
  Tensor h = layer_norm(add(x, maybe_dropout(a, ctx)), p.ln1_gain, p.ln1_bias);
  Tensor b = multi_head_attention(h, memory, p.cross_mha, memory_keep);
  Tensor h2 = layer_norm(add(h, maybe_dropout(b, ctx)), p.ln2_gain, p.ln2_bias);
  return pfn(h2, p.ffn, ctx);
}

QsummParams QsummParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  QsummParams p;
  p.embedding = xavier(cfg.vocab_size, cfg.d_model, rng);
  for (int i = 0; i < cfg.layers_pre_block; ++i)
    p.block_layers.push_back(EncoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  p.block_s2t = S2tParams::init(cfg.d_w, cfg.d_model, rng);
  for (int i = 0; i < cfg.layers_post_block; ++i)
    p.post_block_layers.push_back(
        EncoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  for (int i = 0; i < cfg.layers_query; ++i)
    p.query_layers.push_back(EncoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  p.query_s2t = S2tParams::init(cfg.d_w, cfg.d_model, rng);
  p.csa = CsaParams::init(
      cfg.variant == ModelVariant::CsaMul ? CsaVariant::Multiplicative : CsaVariant::Additive,
      cfg.d_model, cfg.d_model, cfg.d_w, cfg.csa_heads, cfg.d_model, cfg.d_ffn, rng);
  for (int i = 0; i < cfg.layers_post_csa; ++i)
    p.post_csa_layers.push_back(
        EncoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  for (int i = 0; i < cfg.decoder_layers; ++i)
    p.dec_layers.push_back(DecoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  p.out_w = xavier(cfg.vocab_size, cfg.d_model, rng);
  p.out_b = Tensor::zeros({cfg.vocab_size}, true);
  for (int i = 0; i < cfg.decoder_layers; ++i)
    p.ext_layers.push_back(EncoderLayerParams::init(cfg.sa_heads, cfg.d_model, cfg.d_ffn, rng));
  p.ext_w = row_vector_param(cfg.d_model, rng);
  p.ext_b = Tensor::zeros({}, true);
  return p;
}

void QsummParams::register_into(ParamMap& pm) {
  pm.add("embed", embedding);
  for (std::size_t i = 0; i < block_layers.size(); ++i)
    block_layers[i].register_into(pm, "block" + std::to_string(i) + ".");
  block_s2t.register_into(pm, "block_s2t.");
  for (std::size_t i = 0; i < post_block_layers.size(); ++i)
    post_block_layers[i].register_into(pm, "post_block" + std::to_string(i) + ".");
  for (std::size_t i = 0; i < query_layers.size(); ++i)
    query_layers[i].register_into(pm, "query" + std::to_string(i) + ".");
  query_s2t.register_into(pm, "query_s2t.");
  csa.register_into(pm, "csa.");
  for (std::size_t i = 0; i < post_csa_layers.size(); ++i)
    post_csa_layers[i].register_into(pm, "post_csa" + std::to_string(i) + ".");
  for (std::size_t i = 0; i < dec_layers.size(); ++i)
    dec_layers[i].register_into(pm, "dec" + std::to_string(i) + ".");
  pm.add("out.w", out_w);
  pm.add("out.b", out_b);
  for (std::size_t i = 0; i < ext_layers.size(); ++i)
    ext_layers[i].register_into(pm, "ext" + std::to_string(i) + ".");
  pm.add("ext.w", ext_w);
  pm.add("ext.b", ext_b);
}

ModelInput input_from_batch(const Batch& batch, std::size_t row) {
  ModelInput in;
  if (batch.extractive) {
    in.sentence_ids = batch.sentence_ids[row];
    in.sentence_mask = batch.sentence_mask[row];
    in.sentence_present = batch.sentence_present[row];
  } else {
    in.passage_ids = batch.passage.ids[row];
    in.passage_mask = batch.passage.mask[row];
  }
  in.query_ids = batch.query.ids[row];
  in.query_mask = batch.query.mask[row];
  return in;
}

ModelInput input_from_instance(const Vocab& vocab, const QsummInstance& instance) {
  ModelInput in;
  if (instance.extractive) {
    for (const std::string& s : instance.sentences) {
      std::vector<int> ids = vocab.encode(tokenize(s));
      if (ids.empty()) ids.push_back(Vocab::kUnk);
      in.sentence_ids.push_back(std::move(ids));
    }
  } else {
    in.passage_ids = vocab.encode(tokenize(instance.passage));
  }
  in.query_ids = vocab.encode(tokenize(instance.query));
  return in;
}

std::vector<int> target_from_instance(const Vocab& vocab, const QsummInstance& instance) {
  std::vector<int> target{Vocab::kBos};
  for (int id : vocab.encode(tokenize(instance.summary))) target.push_back(id);
  target.push_back(Vocab::kEos);
  return target;
}

Tensor encode_query_vec(const ModelConfig& cfg, const QsummParams& params,
                        const std::vector<int>& ids, const std::vector<std::uint8_t>& mask,
                        const RunCtx& ctx) {
  std::vector<int> live = live_ids(ids, mask);
  if (live.empty()) throw DataError("empty query");
  const int m = static_cast<int>(live.size());
  Tensor x = with_positions(embed_rows(params, live), cfg.token_pos_enc);
  for (const EncoderLayerParams& layer : params.query_layers)
    x = encoder_layer(x, layer, full_square(m), ctx);
  return s2t_self_attention(x, params.query_s2t, all_live(m)).u;
}

ModelOutput model_encode(const ModelConfig& cfg, const QsummParams& params,
                         const ModelInput& input, const RunCtx& ctx) {
  validate(cfg);
  if (cfg.variant == ModelVariant::Concat && cfg.decoder == DecoderMode::Extractive &&
      cfg.block_mode != BlockMode::Sentence)
    throw ContractError("concat variant with extractive decoding requires sentence blocks");

  std::vector<int> prepend;
  if (cfg.variant == ModelVariant::Concat) {
    prepend = live_ids(input.query_ids, input.query_mask);
    if (prepend.empty()) throw DataError("empty query");
    prepend.push_back(Vocab::kSep);
  }

  std::vector<BlockSpec> blocks = build_blocks(cfg, input, prepend);
  if (blocks.empty()) throw DataError("empty passage");

  std::vector<Tensor> rows;
  rows.reserve(blocks.size());
  for (const BlockSpec& block : blocks) {
    Tensor x = with_positions(embed_rows(params, block.ids), cfg.token_pos_enc);
    for (const EncoderLayerParams& layer : params.block_layers)
      x = encoder_layer(x, layer, pad_square(block.keep), ctx);
    rows.push_back(s2t_self_attention(x, params.block_s2t, block.keep).u);
  }
  Tensor v = stack_rows(rows);
  const int n = static_cast<int>(blocks.size());
  v = with_positions(v, cfg.block_pos_enc);
  for (const EncoderLayerParams& layer : params.post_block_layers)
    v = encoder_layer(v, layer, full_square(n), ctx);

  ModelOutput out;
  out.n_blocks = n;
  out.block_offset =
      cfg.variant == ModelVariant::Concat && cfg.block_mode == BlockMode::Sentence ? 1 : 0;

  Tensor u;
  switch (cfg.variant) {
    case ModelVariant::Transformer:
    case ModelVariant::Concat:
      u = v;
      break;
    case ModelVariant::AddBaseline: {
      Tensor c = encode_query_vec(cfg, params, input.query_ids, input.query_mask, ctx);
      u = add_rowwise(v, c);
      break;
    }
    case ModelVariant::CsaMul:
    case ModelVariant::CsaAdd: {
      Tensor c = encode_query_vec(cfg, params, input.query_ids, input.query_mask, ctx);
      MultiHeadCsaResult r = multi_head_csa(v, c, params.csa, all_live(n), ctx);
      u = r.u;
      out.p = r.p;
      out.head_weights = std::move(r.head_weights);
      break;
    }
  }
  for (const EncoderLayerParams& layer : params.post_csa_layers)
    u = encoder_layer(u, layer, full_square(n), ctx);
  out.u = u;
  return out;
}

Tensor abstractive_loss(const ModelConfig& cfg, const QsummParams& params,
                        const ModelOutput& encoded, const std::vector<int>& target_ids,
                        const std::vector<std::uint8_t>& target_mask, const RunCtx& ctx) {
  std::vector<int> target = live_ids(target_ids, target_mask);
  if (target.size() < 2)
    throw ContractError("target must hold at least the sequence frame tokens");
  std::vector<int> inputs(target.begin(), target.end() - 1);
  std::vector<int> gold(target.begin() + 1, target.end());
  const int t = static_cast<int>(inputs.size());
  Tensor x = with_positions(embed_rows(params, inputs), cfg.token_pos_enc);
  const MaskMat self_keep = causal_square(all_live(t));
  const MaskMat mem_keep = cross_keep(t, all_live(encoded.n_blocks));
  for (const DecoderLayerParams& layer : params.dec_layers)
    x = decoder_layer(x, encoded.u, layer, self_keep, mem_keep, ctx);
  Tensor logits = add_rowwise(matmul(x, transpose(params.out_w)), params.out_b);
  return cross_entropy_rows(logits, gold);
}

std::vector<int> greedy_decode(const ModelConfig& cfg, const QsummParams& params,
                               const ModelOutput& encoded) {
  NoGrad inference;
  RunCtx ctx;
  std::vector<int> prefix{Vocab::kBos};
  std::vector<int> out;
  const int vocab = params.out_w.rows();
  for (int step = 0; step < cfg.max_decode_len; ++step) {
    const int t = static_cast<int>(prefix.size());
    Tensor x = with_positions(embed_rows(params, prefix), cfg.token_pos_enc);
    const MaskMat self_keep = causal_square(all_live(t));
    const MaskMat mem_keep = cross_keep(t, all_live(encoded.n_blocks));
    for (const DecoderLayerParams& layer : params.dec_layers)
      x = decoder_layer(x, encoded.u, layer, self_keep, mem_keep, ctx);
    Tensor logits = add_rowwise(matmul(x, transpose(params.out_w)), params.out_b);
    const Array& flat = logits.value();
    int best = 0;
    double best_v = flat((t - 1) * vocab);
    for (int j = 1; j < vocab; ++j) {
      const double v = flat((t - 1) * vocab + j);
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    if (best == Vocab::kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

ExtractiveResult extractive_decode(const ModelConfig& cfg, const QsummParams& params,
                                   const ModelOutput& encoded, const RunCtx& ctx) {
  ExtractiveResult res;
  res.probs = selection_probs(cfg, params, encoded, ctx);
  const int n = static_cast<int>(res.probs.size());
  for (int i = 0; i < n; ++i)
    if (res.probs[i] > cfg.threshold) res.selected.push_back(i);
  if (res.selected.empty() && cfg.force_top1) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (res.probs[i] > res.probs[best]) best = i;
    res.selected.push_back(best);
  }
  return res;
}

Tensor extractive_loss(const ModelConfig& cfg, const QsummParams& params,
                       const ModelOutput& encoded, const std::vector<std::uint8_t>& labels,
                       const RunCtx& ctx) {
  Tensor probs = selection_probs(cfg, params, encoded, ctx);
  const int n = static_cast<int>(probs.size());
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("labels length " + std::to_string(labels.size()) +
                         " does not match content block count " + std::to_string(n));
  std::vector<int> as_int(labels.begin(), labels.end());
  return binary_cross_entropy_many(probs, as_int, all_live(n));
}

}  // namespace csa
