#pragma once

#include <random>
#include <string>
#include <vector>

#include "csa/attention.hpp"
#include "csa/ops.hpp"
#include "csa/tensor.hpp"

namespace csa {

enum class CsaVariant { Multiplicative, Additive };

// Parameter bundle for one conditional self-attention block. cross scores
// tokens against the condition; sa is the pairwise compatibility over scaled
// tokens (W1 applies to the attended token h_i, W2 to the anchor h_j); heads
// hold the K subspace projections, mixed by w_head and finished by a PFN.
struct CsaParams {
  CsaVariant variant = CsaVariant::Multiplicative;
  AttentionParams cross;
  AttentionParams sa;
  std::vector<Tensor> heads;  // K projections [d_head x d_in]
  Tensor w_head;              // [K]
  PfnParams pfn;

  static CsaParams init(CsaVariant variant, int d_in, int d_c, int d_w, int k, int d_head,
                        int d_ffn, std::mt19937_64& rng);
  void register_into(ParamMap& pm, const std::string& prefix);
};

// Dependency distribution of tokens on the condition: softmax over per-token
// cross-attention scores, restricted to live positions.
Tensor condition_scores(const Tensor& xs, const Tensor& c, const AttentionParams& cross,
                        CsaVariant variant, const MaskVec& keep);

// h_i = p_i * x_i.
Tensor scale_tokens(const Tensor& xs, const Tensor& p);

// Pairwise compatibility w^T tanh(W1 h_i + W2 h_j + b_vec) + b_scalar.
Tensor csa_compat(const Tensor& h_i, const Tensor& h_j, const AttentionParams& sa);

namespace detail {
// Backward sign of the compat seam. Gradient audits flip this to prove they
// detect a broken backward, then restore it; every other use leaves it at 1.
extern double compat_grad_sign;
}

struct CsaAttendResult {
  Tensor u;        // [n x d]
  Tensor weights;  // [n x n]; row j holds u_j's distribution over tokens i
};

// Self-attention over scaled tokens with the diagonal masked: u_j is a convex
// combination of {h_i : i != j, live}. With a single live token the layer is a
// pass-through (u = h) and weights are all zero.
CsaAttendResult csa_attend(const Tensor& h, const AttentionParams& sa, const MaskVec& keep);

// Full single-width pipeline: condition scores, token scaling, masked
// self-attention. sa widths must match xs.
Tensor csa_layer(const Tensor& xs, const Tensor& c, const CsaParams& params, const MaskVec& keep);

struct MultiHeadCsaResult {
  Tensor u;                          // [n x d_head]
  Tensor p;                          // [n] condition scores
  std::vector<Tensor> head_weights;  // K matrices [n x n]
};

// Condition scores and scaling once at full width; each head attends in its
// projected subspace; head outputs are mixed by w_head and passed through the
// PFN.
MultiHeadCsaResult multi_head_csa(const Tensor& xs, const Tensor& c, const CsaParams& params,
                                  const MaskVec& keep, const RunCtx& ctx = {});

}  // namespace csa
