#pragma once

#include <random>
#include <vector>

#include "csa/tensor.hpp"

// Differentiable free functions over Tensor. Each op validates shapes, computes
// the forward value through Eigen, and registers an exact backward rule on the
// active tape.

namespace csa {

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] * [k x n]
Tensor matvec(const Tensor& a, const Tensor& x);  // [m x k] * [k]
Tensor transpose(const Tensor& a);

// --- elementwise / structural ---
Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor smul(const Tensor& a, const Tensor& s);        // s is rank-0
Tensor add_scalar(const Tensor& a, const Tensor& s);  // s is rank-0, broadcast add
Tensor add_rowwise(const Tensor& m, const Tensor& v); // v added to every row of m
Tensor scale_rows(const Tensor& m, const Tensor& p);  // row i scaled by p[i]
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);   // -> rank-0
Tensor mean(const Tensor& a);  // -> rank-0

Tensor concat(const std::vector<Tensor>& parts, int axis = 0);
Tensor slice(const Tensor& v, int start, int len);        // rank-1
Tensor slice_rows(const Tensor& m, int start, int len);   // rank-2
Tensor row(const Tensor& m, int i);                       // rank-2 -> rank-1
Tensor elem(const Tensor& v, int i);                      // rank-1 -> rank-0
Tensor reshape(const Tensor& a, Shape shape);
Tensor stack_rows(const std::vector<Tensor>& rows);       // n rank-1 -> [n x d]
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Row-wise layer normalization with learned gain/bias (rank-1 input = one row).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool training);

// --- softmax family ---
// keep[i] == true marks a live position. Masked outputs are exactly zero and
// live outputs sum to 1; stabilized by max subtraction over live entries.
Tensor masked_softmax(const Tensor& scores, const MaskVec& keep);
Tensor masked_softmax_rows(const Tensor& scores, const MaskMat& keep);

// --- losses ---
Tensor cross_entropy(const Tensor& logits, int target);
// Mean cross-entropy over rows of [n x V] logits.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);
Tensor binary_cross_entropy(const Tensor& prob, int label);  // prob rank-0
// Mean over per-position binary cross-entropies, restricted to keep[i].
Tensor binary_cross_entropy_many(const Tensor& probs, const std::vector<int>& labels,
                                 const MaskVec& keep);

// Probability clamp used by the log losses.
inline constexpr double kProbEps = 1e-12;

}  // namespace csa
