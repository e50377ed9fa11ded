#include "csa/attention.hpp"

#include <cmath>

namespace csa {

namespace {

Tensor bias_vec(int d) { return Tensor::zeros({d}, true); }

Tensor row_vector_param(int d, std::mt19937_64& rng) {
  Tensor w = xavier(1, d, rng);
  return Tensor::from_array({d}, w.value(), true);
}

void require_vec_width(const Tensor& v, int d, const char* op) {
  if (v.ndim() != 1 || v.shape()[0] != d)
    throw DimensionError(std::string(op) + ": expected vector of width " + std::to_string(d) +
                         ", got " + to_string(v.shape()));
}

}  // namespace

Tensor maybe_dropout(const Tensor& x, const RunCtx& ctx) {
  if (!ctx.training || ctx.dropout_rate == 0.0) return x;
  if (!ctx.rng) throw ContractError("dropout requested without an rng");
  return dropout(x, ctx.dropout_rate, *ctx.rng, true);
}

AttentionParams AttentionParams::init(int d_w, int d_e, int d_c, std::mt19937_64& rng) {
  AttentionParams p;
  p.W1 = xavier(d_w, d_e, rng);
  p.W2 = xavier(d_w, d_c, rng);
  p.w = row_vector_param(d_w, rng);
  p.b_vec = bias_vec(d_w);
  p.b_scalar = Tensor::zeros({}, true);
  return p;
}

void AttentionParams::register_into(ParamMap& pm, const std::string& prefix) {
  pm.add(prefix + ".W1", W1);
  pm.add(prefix + ".W2", W2);
  pm.add(prefix + ".w", w);
  pm.add(prefix + ".b_vec", b_vec);
  pm.add(prefix + ".b_scalar", b_scalar);
}

Tensor multiplicative_score(const Tensor& x, const Tensor& c, const AttentionParams& p) {
  require_vec_width(x, p.W1.cols(), "multiplicative_score");
  require_vec_width(c, p.W2.cols(), "multiplicative_score");
  Tensor s = sum(mul(matvec(p.W1, x), matvec(p.W2, c)));
  if (p.scaled) s = scale(s, 1.0 / std::sqrt(static_cast<double>(p.W1.rows())));
  return s;
}

Tensor additive_score(const Tensor& x, const Tensor& c, const AttentionParams& p) {
  require_vec_width(x, p.W1.cols(), "additive_score");
  require_vec_width(c, p.W2.cols(), "additive_score");
  Tensor pre = add(add(matvec(p.W1, x), matvec(p.W2, c)), p.b_vec);
  return add_scalar(sum(mul(p.w, tanh(pre))), p.b_scalar);
}

Tensor attention_scores(const Tensor& xs, const Tensor& c, const AttentionParams& p,
                        ScoreKind kind) {
  if (xs.ndim() != 2)
    throw DimensionError("attention_scores: expected [n x d_e] rows, got " + to_string(xs.shape()));
  if (xs.cols() != p.W1.cols())
    throw DimensionError("attention_scores: token width " + std::to_string(xs.cols()) +
                         " vs W1 width " + std::to_string(p.W1.cols()));
  require_vec_width(c, p.W2.cols(), "attention_scores");
  // [n x d_W] projections of every token at once.
  Tensor proj = matmul(xs, transpose(p.W1));
  Tensor cproj = matvec(p.W2, c);
  if (kind == ScoreKind::Multiplicative) {
    Tensor s = matvec(proj, cproj);
    if (p.scaled) s = scale(s, 1.0 / std::sqrt(static_cast<double>(p.W1.rows())));
    return s;
  }
  Tensor pre = tanh(add_rowwise(add_rowwise(proj, cproj), p.b_vec));
  return add_scalar(matvec(pre, p.w), p.b_scalar);
}

AttendResult attend_scored(const Tensor& xs, const Tensor& scores, const MaskVec& keep) {
  if (xs.ndim() != 2)
    throw DimensionError("attend: expected [n x d] rows, got " + to_string(xs.shape()));
  if (scores.ndim() != 1 || scores.shape()[0] != xs.rows())
    throw DimensionError("attend: " + std::to_string(xs.rows()) + " rows vs scores " +
                         to_string(scores.shape()));
  AttendResult r;
  r.p = masked_softmax(scores, keep);
  r.u = matvec(transpose(xs), r.p);
  return r;
}

AttendResult attend(const Tensor& xs, const Tensor& c, const AttentionParams& p, ScoreKind kind,
                    const MaskVec& keep) {
  return attend_scored(xs, attention_scores(xs, c, p, kind), keep);
}

S2tParams S2tParams::init(int d_w, int d_e, std::mt19937_64& rng) {
  S2tParams p;
  p.W1 = xavier(d_w, d_e, rng);
  p.w = row_vector_param(d_w, rng);
  p.b_vec = bias_vec(d_w);
  p.b_scalar = Tensor::zeros({}, true);
  return p;
}

void S2tParams::register_into(ParamMap& pm, const std::string& prefix) {
  pm.add(prefix + ".W1", W1);
  pm.add(prefix + ".w", w);
  pm.add(prefix + ".b_vec", b_vec);
  pm.add(prefix + ".b_scalar", b_scalar);
}

AttendResult s2t_self_attention(const Tensor& xs, const S2tParams& p, const MaskVec& keep) {
  if (xs.ndim() != 2)
    throw DimensionError("s2t_self_attention: expected [n x d] rows, got " + to_string(xs.shape()));
  if (xs.cols() != p.W1.cols())
    throw DimensionError("s2t_self_attention: token width " + std::to_string(xs.cols()) +
                         " vs W1 width " + std::to_string(p.W1.cols()));
  Tensor pre = tanh(add_rowwise(matmul(xs, transpose(p.W1)), p.b_vec));
  Tensor scores = add_scalar(matvec(pre, p.w), p.b_scalar);
  return attend_scored(xs, scores, keep);
}

PfnParams PfnParams::init(int d_model, int d_hidden, std::mt19937_64& rng) {
  PfnParams p;
  p.W1 = xavier(d_hidden, d_model, rng);
  p.b1 = bias_vec(d_hidden);
  p.W2 = xavier(d_model, d_hidden, rng);
  p.b2 = bias_vec(d_model);
  p.ln_gain = Tensor::full({d_model}, 1.0, true);
  p.ln_bias = bias_vec(d_model);
  return p;
}

void PfnParams::register_into(ParamMap& pm, const std::string& prefix) {
  pm.add(prefix + ".W1", W1);
  pm.add(prefix + ".b1", b1);
  pm.add(prefix + ".W2", W2);
  pm.add(prefix + ".b2", b2);
  pm.add(prefix + ".ln_gain", ln_gain);
  pm.add(prefix + ".ln_bias", ln_bias);
}

Tensor pfn(const Tensor& x, const PfnParams& p, const RunCtx& ctx) {
  const int d = p.W1.cols();
  if (x.ndim() == 1) {
    require_vec_width(x, d, "pfn");
    Tensor h = relu(add(matvec(p.W1, x), p.b1));
    Tensor out = maybe_dropout(add(matvec(p.W2, h), p.b2), ctx);
    return layer_norm(add(x, out), p.ln_gain, p.ln_bias);
  }
  if (x.ndim() != 2 || x.cols() != d)
    throw DimensionError("pfn: expected width " + std::to_string(d) + ", got " +
                         to_string(x.shape()));
  Tensor h = relu(add_rowwise(matmul(x, transpose(p.W1)), p.b1));
  Tensor out = maybe_dropout(add_rowwise(matmul(h, transpose(p.W2)), p.b2), ctx);
  return layer_norm(add(x, out), p.ln_gain, p.ln_bias);
}

MultiHeadParams MultiHeadParams::init(int heads, int d_model, int d_head, std::mt19937_64& rng) {
  if (heads < 1) throw ContractError("multi-head attention needs at least one head");
  MultiHeadParams p;
  p.heads = heads;
  p.d_head = d_head;
  for (int k = 0; k < heads; ++k) {
    p.Wq.push_back(xavier(d_head, d_model, rng));
    p.Wk.push_back(xavier(d_head, d_model, rng));
    p.Wv.push_back(xavier(d_head, d_model, rng));
  }
  p.Wo = xavier(d_model, heads * d_head, rng);
  return p;
}

void MultiHeadParams::register_into(ParamMap& pm, const std::string& prefix) {
  for (int k = 0; k < heads; ++k) {
    const std::string h = prefix + ".h" + std::to_string(k);
    pm.add(h + ".Wq", Wq[k]);
    pm.add(h + ".Wk", Wk[k]);
    pm.add(h + ".Wv", Wv[k]);
  }
  pm.add(prefix + ".Wo", Wo);
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const MultiHeadParams& p, const MaskMat& keep) {
  if (queries.ndim() != 2 || keys_values.ndim() != 2)
    throw DimensionError("multi_head_attention: expected row matrices, got " +
                         to_string(queries.shape()) + " and " + to_string(keys_values.shape()));
  const int nq = queries.rows(), nk = keys_values.rows();
  if (keep.rows() != nq || keep.cols() != nk)
    throw DimensionError("multi_head_attention: mask " + std::to_string(keep.rows()) + "x" +
                         std::to_string(keep.cols()) + " vs " + std::to_string(nq) + " queries, " +
                         std::to_string(nk) + " keys");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.d_head));
  std::vector<Tensor> head_out;
  head_out.reserve(p.heads);
  for (int k = 0; k < p.heads; ++k) {
    Tensor Q = matmul(queries, transpose(p.Wq[k]));
    Tensor K = matmul(keys_values, transpose(p.Wk[k]));
    Tensor V = matmul(keys_values, transpose(p.Wv[k]));
    Tensor scores = scale(matmul(Q, transpose(K)), inv_sqrt);
    Tensor attn = masked_softmax_rows(scores, keep);
    head_out.push_back(matmul(attn, V));
  }
  Tensor stacked = p.heads == 1 ? head_out[0] : concat(head_out, 1);
  return matmul(stacked, transpose(p.Wo));
}

Tensor t2t_self_attention(const Tensor& xs, const MultiHeadParams& p, const MaskMat& keep) {
  return multi_head_attention(xs, xs, p, keep);
}

EncoderLayerParams EncoderLayerParams::init(int heads, int d_model, int d_hidden,
                                            std::mt19937_64& rng) {
  EncoderLayerParams p;
  const int d_head = std::max(1, d_model / heads);
  p.mha = MultiHeadParams::init(heads, d_model, d_head, rng);
  p.ln_gain = Tensor::full({d_model}, 1.0, true);
  p.ln_bias = bias_vec(d_model);
  p.ffn = PfnParams::init(d_model, d_hidden, rng);
  return p;
}

void EncoderLayerParams::register_into(ParamMap& pm, const std::string& prefix) {
  mha.register_into(pm, prefix + ".mha");
  pm.add(prefix + ".ln_gain", ln_gain);
  pm.add(prefix + ".ln_bias", ln_bias);
  ffn.register_into(pm, prefix + ".ffn");
}

Tensor encoder_layer(const Tensor& xs, const EncoderLayerParams& p, const MaskMat& keep,
                     const RunCtx& ctx) {
  Tensor attn = maybe_dropout(t2t_self_attention(xs, p.mha, keep), ctx);
  Tensor mid = layer_norm(add(xs, attn), p.ln_gain, p.ln_bias);
  return pfn(mid, p.ffn, ctx);
}

Tensor sinusoidal_encoding(int n, int d) {
  if (n < 1 || d < 1) throw ContractError("sinusoidal_encoding: needs positive sizes");
  Array data(static_cast<std::int64_t>(n) * d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / d);
      const double angle = pos / rate;
      data(static_cast<std::int64_t>(pos) * d + i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_array({n, d}, std::move(data));
}

MaskMat full_square(int n) { return MaskMat::Constant(n, n, true); }

// Key-side masking only: dead query rows still score the live keys so their
// softmax stays defined; downstream masks discard those outputs.
MaskMat pad_square(const MaskVec& keep) {
  const int n = static_cast<int>(keep.size());
  MaskMat m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = keep(c);
  return m;
}

// Causal + key-side padding; position 0 must be live for every row to have
// at least one key.
MaskMat causal_square(const MaskVec& keep) {
  const int n = static_cast<int>(keep.size());
  MaskMat m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = keep(c) && c <= r;
  return m;
}

MaskMat cross_keep(int n_queries, const MaskVec& keep_keys) {
  const int nk = static_cast<int>(keep_keys.size());
  MaskMat m(n_queries, nk);
  for (int r = 0; r < n_queries; ++r)
    for (int c = 0; c < nk; ++c) m(r, c) = keep_keys(c);
  return m;
}

}  // namespace csa
