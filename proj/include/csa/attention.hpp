#pragma once

#include <random>
#include <string>
#include <vector>

#include "csa/ops.hpp"
#include "csa/tensor.hpp"

namespace csa {

// Per-call runtime knobs. rng must outlive the call when training with dropout.
struct RunCtx {
  std::mt19937_64* rng = nullptr;
  bool training = false;
  double dropout_rate = 0.0;
};

Tensor maybe_dropout(const Tensor& x, const RunCtx& ctx);

// Parameters of the two scalar compatibility functions. W1 maps tokens
// (d_W x d_e), W2 maps the condition (d_W x d_c); w, b_vec are length d_W.
// scaled divides the multiplicative score by sqrt(d_W); off by default.
struct AttentionParams {
  Tensor W1, W2, w, b_vec, b_scalar;
  bool scaled = false;

  static AttentionParams init(int d_w, int d_e, int d_c, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

enum class ScoreKind { Multiplicative, Additive };

// <W1 x, W2 c>, optionally scaled by 1/sqrt(d_W).
Tensor multiplicative_score(const Tensor& x, const Tensor& c, const AttentionParams& p);
// w^T tanh(W1 x + W2 c + b_vec) + b_scalar.
Tensor additive_score(const Tensor& x, const Tensor& c, const AttentionParams& p);
// One score per row of xs: [n x d_e] -> [n].
Tensor attention_scores(const Tensor& xs, const Tensor& c, const AttentionParams& p, ScoreKind kind);

struct AttendResult {
  Tensor p;  // [n] distribution over live rows
  Tensor u;  // expectation over rows of xs under p
};

// u = sum_i p_i x_i with p = masked_softmax(scores). The result depends on the
// inputs only through scores, so any scorer can feed this.
AttendResult attend_scored(const Tensor& xs, const Tensor& scores, const MaskVec& keep);
AttendResult attend(const Tensor& xs, const Tensor& c, const AttentionParams& p, ScoreKind kind,
                    const MaskVec& keep);

// Source2token scoring: the condition term is dropped from the additive form.
struct S2tParams {
  Tensor W1, w, b_vec, b_scalar;

  static S2tParams init(int d_w, int d_e, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

AttendResult s2t_self_attention(const Tensor& xs, const S2tParams& p, const MaskVec& keep);

// Position-wise feed-forward with residual and layer normalization:
// ln(x + W2 relu(W1 x + b1) + b2). Accepts a vector or a row matrix.
struct PfnParams {
  Tensor W1, b1, W2, b2, ln_gain, ln_bias;

  static PfnParams init(int d_model, int d_hidden, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

Tensor pfn(const Tensor& x, const PfnParams& p, const RunCtx& ctx = {});

// Transformer-convention multi-head attention: per-head query/key/value
// projections (d_head x d_model), scaled dot-product scores, output projection
// Wo (d_model x heads*d_head).
struct MultiHeadParams {
  int heads = 1;
  int d_head = 1;
  std::vector<Tensor> Wq, Wk, Wv;
  Tensor Wo;

  static MultiHeadParams init(int heads, int d_model, int d_head, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

// keep is [n_queries x n_keys]; row r masks which keys query r may attend to.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const MultiHeadParams& p, const MaskMat& keep);
Tensor t2t_self_attention(const Tensor& xs, const MultiHeadParams& p, const MaskMat& keep);

// Post-norm Transformer encoder layer: pfn(ln(x + dropout(mha(x)))).
struct EncoderLayerParams {
  MultiHeadParams mha;
  Tensor ln_gain, ln_bias;
  PfnParams ffn;

  static EncoderLayerParams init(int heads, int d_model, int d_hidden, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

Tensor encoder_layer(const Tensor& xs, const EncoderLayerParams& p, const MaskMat& keep,
                     const RunCtx& ctx = {});

// Constant sin/cos table; PE(pos, 2i) = sin(pos / 10000^(2i/d)).
Tensor sinusoidal_encoding(int n, int d);

// Mask builders. keep[i] == true marks a live position throughout. Padding is
// masked on the key side only: dead query rows still see live keys so their
// softmax stays defined, and downstream masking discards their outputs.
MaskMat full_square(int n);
MaskMat pad_square(const MaskVec& keep);               // m(r, c) = keep_c
MaskMat causal_square(const MaskVec& keep);            // m(r, c) = keep_c && c <= r
MaskMat cross_keep(int n_queries, const MaskVec& keep_keys);

}  // namespace csa
