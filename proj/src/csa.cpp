#include "csa/csa.hpp"

namespace csa {

namespace detail {
double compat_grad_sign = 1.0;
}

namespace {

ScoreKind kind_of(CsaVariant v) {
  return v == CsaVariant::Multiplicative ? ScoreKind::Multiplicative : ScoreKind::Additive;
}

// Identity whose backward multiplies by compat_grad_sign.
Tensor compat_seam(const Tensor& x) {
  auto xp = x.ptr();
  return detail::make_node(x.shape(), x.value(), {x}, [xp](const Array& g) {
    if (xp->requires_grad) xp->grad_tmp += detail::compat_grad_sign * g;
  });
}

}  // namespace

CsaParams CsaParams::init(CsaVariant variant, int d_in, int d_c, int d_w, int k, int d_head,
                          int d_ffn, std::mt19937_64& rng) {
  if (k < 1) throw ContractError("CsaParams: needs at least one head");
  CsaParams p;
  p.variant = variant;
  p.cross = AttentionParams::init(d_w, d_in, d_c, rng);
  p.sa = AttentionParams::init(d_w, d_head, d_head, rng);
  for (int i = 0; i < k; ++i) p.heads.push_back(xavier(d_head, d_in, rng));
  Tensor wh = xavier(1, k, rng);
  p.w_head = Tensor::from_array({k}, wh.value(), true);
  p.pfn = PfnParams::init(d_head, d_ffn, rng);
  return p;
}

void CsaParams::register_into(ParamMap& pm, const std::string& prefix) {
  cross.register_into(pm, prefix + ".cross");
  sa.register_into(pm, prefix + ".sa");
  for (std::size_t k = 0; k < heads.size(); ++k)
    pm.add(prefix + ".theta" + std::to_string(k), heads[k]);
  pm.add(prefix + ".w_head", w_head);
  pfn.register_into(pm, prefix + ".pfn");
}

Tensor condition_scores(const Tensor& xs, const Tensor& c, const AttentionParams& cross,
                        CsaVariant variant, const MaskVec& keep) {
  return masked_softmax(attention_scores(xs, c, cross, kind_of(variant)), keep);
}

Tensor scale_tokens(const Tensor& xs, const Tensor& p) {
  if (xs.ndim() != 2 || p.ndim() != 1 || xs.rows() != p.shape()[0])
    throw DimensionError("scale_tokens: " + to_string(xs.shape()) + " vs " + to_string(p.shape()));
  return scale_rows(xs, p);
}

Tensor csa_compat(const Tensor& h_i, const Tensor& h_j, const AttentionParams& sa) {
  return compat_seam(additive_score(h_i, h_j, sa));
}

CsaAttendResult csa_attend(const Tensor& h, const AttentionParams& sa, const MaskVec& keep) {
  if (h.ndim() != 2) throw DimensionError("csa_attend: expected [n x d] rows");
  const int n = h.rows();
  if (static_cast<int>(keep.size()) != n)
    throw DimensionError("csa_attend: " + std::to_string(n) + " rows vs " +
                         std::to_string(keep.size()) + " mask entries");
  int live = 0;
  for (int i = 0; i < n; ++i) live += keep(i) ? 1 : 0;
  if (live == 0) throw DegenerateDistributionError("csa_attend: no live tokens");
  if (live == 1) {
    // The diagonal mask leaves an empty support: pass tokens through.
    return {h, Tensor::zeros({n, n})};
  }
  if (h.cols() != sa.W1.cols())
    throw DimensionError("csa_attend: token width " + std::to_string(h.cols()) + " vs W1 width " +
                         std::to_string(sa.W1.cols()));

  // Row j of scores holds f(h_i, h_j) over i: W1 on the attended token,
  // W2 on the anchor.
  Tensor A = matmul(h, transpose(sa.W1));
  Tensor B = matmul(h, transpose(sa.W2));
  std::vector<Tensor> score_rows;
  score_rows.reserve(n);
  for (int j = 0; j < n; ++j) {
    Tensor pre = tanh(add_rowwise(add_rowwise(A, row(B, j)), sa.b_vec));
    score_rows.push_back(add_scalar(matvec(pre, sa.w), sa.b_scalar));
  }
  Tensor scores = stack_rows(score_rows);

  MaskMat keep_pairs(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) keep_pairs(j, i) = keep(i) && i != j;

  CsaAttendResult r;
  r.weights = masked_softmax_rows(scores, keep_pairs);
  r.u = matmul(r.weights, h);
  return r;
}

Tensor csa_layer(const Tensor& xs, const Tensor& c, const CsaParams& params, const MaskVec& keep) {
  Tensor p = condition_scores(xs, c, params.cross, params.variant, keep);
  Tensor h = scale_tokens(xs, p);
  return csa_attend(h, params.sa, keep).u;
}

MultiHeadCsaResult multi_head_csa(const Tensor& xs, const Tensor& c, const CsaParams& params,
                                  const MaskVec& keep, const RunCtx& ctx) {
  const int k = static_cast<int>(params.heads.size());
  if (k < 1 || params.w_head.shape() != Shape{k})
    throw ContractError("multi_head_csa: head projections and w_head disagree");
  MultiHeadCsaResult r;
  r.p = condition_scores(xs, c, params.cross, params.variant, keep);
  Tensor h = scale_tokens(xs, r.p);
  Tensor mixed;
  for (int i = 0; i < k; ++i) {
    Tensor hk = matmul(h, transpose(params.heads[i]));
    CsaAttendResult head = csa_attend(hk, params.sa, keep);
    r.head_weights.push_back(head.weights);
    Tensor contrib = smul(head.u, elem(params.w_head, i));
    mixed = mixed.defined() ? add(mixed, contrib) : contrib;
  }
  r.u = pfn(mixed, params.pfn, ctx);
  return r;
}

}  // namespace csa
