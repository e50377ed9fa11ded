#include "csa/ops.hpp"

#include <cmath>
#include <utility>

namespace csa {

namespace {

constexpr double kMaskBias = -1e30;

Eigen::Map<const RowMat> cmat(const std::shared_ptr<TensorImpl>& t, int r, int c) {
  return {t->data.data(), r, c};
}

Eigen::Map<RowMat> gmat(const std::shared_ptr<TensorImpl>& t, int r, int c) {
  return {t->grad_tmp.data(), r, c};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw DimensionError(std::string(op) + ": shapes differ: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.ndim() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
}

// Shared masked-softmax kernel: additive -1e30 on dead entries before the
// stabilized softmax, then exact zeroing of dead outputs.
Array softmax_keep(const Array& scores, const MaskVec& keep) {
  Array shifted = scores;
  for (Eigen::Index i = 0; i < shifted.size(); ++i)
    if (!keep(i)) shifted(i) += kMaskBias;
  shifted -= shifted.maxCoeff();
  Array e = shifted.exp();
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (!keep(i)) e(i) = 0.0;
  return e / e.sum();
}

// d(softmax)/d(scores) pullback restricted to live entries.
void softmax_backward(const Array& p, const MaskVec& keep, const Array& g, Array& gs) {
  double dot = (g * p).sum();
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (keep(i)) gs(i) += p(i) * (g(i) - dot);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: inner dimensions differ: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  RowMat out = a.mat() * b.mat();
  Array data = Eigen::Map<const Array>(out.data(), static_cast<Eigen::Index>(m) * n);
  auto ap = a.ptr(), bp = b.ptr();
  return detail::make_node(
      {m, n}, std::move(data), {a, b}, [ap, bp, m, k, n](const Array& g) {
        Eigen::Map<const RowMat> G(g.data(), m, n);
        if (ap->requires_grad) gmat(ap, m, k) += G * cmat(bp, k, n).transpose();
        if (bp->requires_grad) gmat(bp, k, n) += cmat(ap, m, k).transpose() * G;
      });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_rank(a, 2, "matvec");
  require_rank(x, 1, "matvec");
  if (a.shape()[1] != x.shape()[0])
    throw DimensionError("matvec: inner dimensions differ: " + to_string(a.shape()) + " vs " +
                         to_string(x.shape()));
  const int m = a.shape()[0], k = a.shape()[1];
  Eigen::VectorXd out = a.mat() * x.vec();
  Array data = Eigen::Map<const Array>(out.data(), m);
  auto ap = a.ptr(), xp = x.ptr();
  return detail::make_node({m}, std::move(data), {a, x}, [ap, xp, m, k](const Array& g) {
    Eigen::Map<const Eigen::VectorXd> G(g.data(), m);
    if (ap->requires_grad)
      gmat(ap, m, k) += G * Eigen::Map<const Eigen::VectorXd>(xp->data.data(), k).transpose();
    if (xp->requires_grad)
      Eigen::Map<Eigen::VectorXd>(xp->grad_tmp.data(), k) += cmat(ap, m, k).transpose() * G;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const int m = a.shape()[0], n = a.shape()[1];
  RowMat out = a.mat().transpose();
  Array data = Eigen::Map<const Array>(out.data(), static_cast<Eigen::Index>(m) * n);
  auto ap = a.ptr();
  return detail::make_node({n, m}, std::move(data), {a}, [ap, m, n](const Array& g) {
    if (!ap->requires_grad) return;
    Eigen::Map<const RowMat> G(g.data(), n, m);
    gmat(ap, m, n) += G.transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto ap = a.ptr(), bp = b.ptr();
  return detail::make_node(a.shape(), a.value() + b.value(), {a, b}, [ap, bp](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g;
    if (bp->requires_grad) bp->grad_tmp += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto ap = a.ptr(), bp = b.ptr();
  return detail::make_node(a.shape(), a.value() - b.value(), {a, b}, [ap, bp](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g;
    if (bp->requires_grad) bp->grad_tmp -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ap = a.ptr(), bp = b.ptr();
  return detail::make_node(a.shape(), a.value() * b.value(), {a, b}, [ap, bp](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * bp->data;
    if (bp->requires_grad) bp->grad_tmp += g * ap->data;
  });
}

Tensor scale(const Tensor& a, double c) {
  auto ap = a.ptr();
  return detail::make_node(a.shape(), a.value() * c, {a}, [ap, c](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * c;
  });
}

Tensor smul(const Tensor& a, const Tensor& s) {
  require_rank(s, 0, "smul");
  const double sv = s.item();
  auto ap = a.ptr(), sp = s.ptr();
  return detail::make_node(a.shape(), a.value() * sv, {a, s}, [ap, sp, sv](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * sv;
    if (sp->requires_grad) sp->grad_tmp(0) += (g * ap->data).sum();
  });
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
  require_rank(s, 0, "add_scalar");
  auto ap = a.ptr(), sp = s.ptr();
  return detail::make_node(a.shape(), a.value() + s.item(), {a, s}, [ap, sp](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g;
    if (sp->requires_grad) sp->grad_tmp(0) += g.sum();
  });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  require_rank(m, 2, "add_rowwise");
  require_rank(v, 1, "add_rowwise");
  const int n = m.shape()[0], d = m.shape()[1];
  if (v.shape()[0] != d)
    throw DimensionError("add_rowwise: row width " + std::to_string(d) + " vs vector length " +
                         std::to_string(v.shape()[0]));
  RowMat out = m.mat();
  out.rowwise() += v.vec().transpose();
  Array data = Eigen::Map<const Array>(out.data(), static_cast<Eigen::Index>(n) * d);
  auto mp = m.ptr(), vp = v.ptr();
  return detail::make_node({n, d}, std::move(data), {m, v}, [mp, vp, n, d](const Array& g) {
    Eigen::Map<const RowMat> G(g.data(), n, d);
    if (mp->requires_grad) mp->grad_tmp += g;
    if (vp->requires_grad)
      Eigen::Map<Eigen::VectorXd>(vp->grad_tmp.data(), d) += G.colwise().sum().transpose();
  });
}

Tensor scale_rows(const Tensor& m, const Tensor& p) {
  require_rank(m, 2, "scale_rows");
  require_rank(p, 1, "scale_rows");
  const int n = m.shape()[0], d = m.shape()[1];
  if (p.shape()[0] != n)
    throw DimensionError("scale_rows: " + std::to_string(n) + " rows vs " +
                         std::to_string(p.shape()[0]) + " scales");
  RowMat out = p.vec().asDiagonal() * m.mat();
  Array data = Eigen::Map<const Array>(out.data(), static_cast<Eigen::Index>(n) * d);
  auto mp = m.ptr(), pp = p.ptr();
  return detail::make_node({n, d}, std::move(data), {m, p}, [mp, pp, n, d](const Array& g) {
    Eigen::Map<const RowMat> G(g.data(), n, d);
    if (mp->requires_grad)
      gmat(mp, n, d) += Eigen::Map<const Eigen::VectorXd>(pp->data.data(), n).asDiagonal() * G;
    if (pp->requires_grad)
      for (int i = 0; i < n; ++i)
        pp->grad_tmp(i) += G.row(i).dot(cmat(mp, n, d).row(i));
  });
}

Tensor tanh(const Tensor& a) {
  Array y = a.value().tanh();
  auto ap = a.ptr();
  Array yc = y;
  return detail::make_node(a.shape(), std::move(y), {a}, [ap, yc](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * (1.0 - yc.square());
  });
}

Tensor relu(const Tensor& a) {
  auto ap = a.ptr();
  return detail::make_node(a.shape(), a.value().max(0.0), {a}, [ap](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * (ap->data > 0.0).cast<double>();
  });
}

Tensor sigmoid(const Tensor& a) {
  Array y = 1.0 / (1.0 + (-a.value()).exp());
  auto ap = a.ptr();
  Array yc = y;
  return detail::make_node(a.shape(), std::move(y), {a}, [ap, yc](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g * yc * (1.0 - yc);
  });
}

Tensor sum(const Tensor& a) {
  auto ap = a.ptr();
  Array data(1);
  data(0) = a.value().sum();
  return detail::make_node({}, std::move(data), {a}, [ap](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g(0);
  });
}

Tensor mean(const Tensor& a) {
  auto ap = a.ptr();
  const double n = static_cast<double>(a.size());
  Array data(1);
  data(0) = a.value().sum() / n;
  return detail::make_node({}, std::move(data), {a}, [ap, n](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g(0) / n;
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const int rank = parts[0].ndim();
  if (rank != 1 && rank != 2) throw DimensionError("concat: rank must be 1 or 2");
  if (axis < 0 || axis >= rank) throw DimensionError("concat: bad axis " + std::to_string(axis));
  for (const auto& p : parts)
    if (p.ndim() != rank)
      throw DimensionError("concat: mixed ranks " + to_string(parts[0].shape()) + " vs " +
                           to_string(p.shape()));

  std::vector<Tensor> inputs = parts;
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.ptr());

  if (rank == 1 || axis == 0) {
    // Row-major: axis-0 concat is contiguous.
    if (rank == 2) {
      const int d = parts[0].shape()[1];
      for (const auto& p : parts)
        if (p.shape()[1] != d)
          throw DimensionError("concat: column counts differ: " + std::to_string(d) + " vs " +
                               std::to_string(p.shape()[1]));
    }
    std::int64_t total = 0;
    for (const auto& p : parts) total += p.size();
    Array data(total);
    std::int64_t off = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& p : parts) {
      offsets.push_back(off);
      data.segment(off, p.size()) = p.value();
      off += p.size();
    }
    Shape shape;
    if (rank == 1) {
      shape = {static_cast<int>(total)};
    } else {
      int nrows = 0;
      for (const auto& p : parts) nrows += p.shape()[0];
      shape = {nrows, parts[0].shape()[1]};
    }
    return detail::make_node(shape, std::move(data), std::move(inputs),
                             [impls, offsets](const Array& g) {
                               for (std::size_t i = 0; i < impls.size(); ++i) {
                                 if (!impls[i]->requires_grad) continue;
                                 impls[i]->grad_tmp += g.segment(offsets[i], impls[i]->data.size());
                               }
                             });
  }

  // rank 2, axis 1
  const int n = parts[0].shape()[0];
  int total_cols = 0;
  for (const auto& p : parts) {
    if (p.shape()[0] != n)
      throw DimensionError("concat: row counts differ: " + std::to_string(n) + " vs " +
                           std::to_string(p.shape()[0]));
    total_cols += p.shape()[1];
  }
  RowMat out(n, total_cols);
  int off = 0;
  std::vector<int> offsets, widths;
  for (const auto& p : parts) {
    offsets.push_back(off);
    widths.push_back(p.shape()[1]);
    out.block(0, off, n, p.shape()[1]) = p.mat();
    off += p.shape()[1];
  }
  Array data = Eigen::Map<const Array>(out.data(), static_cast<Eigen::Index>(n) * total_cols);
  return detail::make_node({n, total_cols}, std::move(data), std::move(inputs),
                           [impls, offsets, widths, n, total_cols](const Array& g) {
                             Eigen::Map<const RowMat> G(g.data(), n, total_cols);
                             for (std::size_t i = 0; i < impls.size(); ++i) {
                               if (!impls[i]->requires_grad) continue;
                               gmat(impls[i], n, widths[i]) += G.block(0, offsets[i], n, widths[i]);
                             }
                           });
}

Tensor slice(const Tensor& v, int start, int len) {
  require_rank(v, 1, "slice");
  if (start < 0 || len < 1 || start + len > v.shape()[0])
    throw IndexError("slice: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for length " + std::to_string(v.shape()[0]));
  auto vp = v.ptr();
  return detail::make_node({len}, v.value().segment(start, len), {v},
                           [vp, start, len](const Array& g) {
                             if (vp->requires_grad) vp->grad_tmp.segment(start, len) += g;
                           });
}

Tensor slice_rows(const Tensor& m, int start, int len) {
  require_rank(m, 2, "slice_rows");
  const int n = m.shape()[0], d = m.shape()[1];
  if (start < 0 || len < 1 || start + len > n)
    throw IndexError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + std::to_string(n) + " rows");
  auto mp = m.ptr();
  return detail::make_node(
      {len, d}, m.value().segment(static_cast<std::int64_t>(start) * d, static_cast<std::int64_t>(len) * d),
      {m}, [mp, start, len, d](const Array& g) {
        if (mp->requires_grad)
          mp->grad_tmp.segment(static_cast<std::int64_t>(start) * d,
                               static_cast<std::int64_t>(len) * d) += g;
      });
}

Tensor row(const Tensor& m, int i) {
  require_rank(m, 2, "row");
  const int n = m.shape()[0], d = m.shape()[1];
  if (i < 0 || i >= n)
    throw IndexError("row: index " + std::to_string(i) + " out of range for " + std::to_string(n));
  auto mp = m.ptr();
  return detail::make_node({d}, m.value().segment(static_cast<std::int64_t>(i) * d, d), {m},
                           [mp, i, d](const Array& g) {
                             if (mp->requires_grad)
                               mp->grad_tmp.segment(static_cast<std::int64_t>(i) * d, d) += g;
                           });
}

Tensor elem(const Tensor& v, int i) {
  require_rank(v, 1, "elem");
  if (i < 0 || i >= v.shape()[0])
    throw IndexError("elem: index " + std::to_string(i) + " out of range for " +
                     std::to_string(v.shape()[0]));
  auto vp = v.ptr();
  Array data(1);
  data(0) = v.value()(i);
  return detail::make_node({}, std::move(data), {v}, [vp, i](const Array& g) {
    if (vp->requires_grad) vp->grad_tmp(i) += g(0);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  auto ap = a.ptr();
  return detail::make_node(std::move(shape), a.value(), {a}, [ap](const Array& g) {
    if (ap->requires_grad) ap->grad_tmp += g;
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const int d = rows[0].ndim() == 1 ? rows[0].shape()[0] : -1;
  if (d < 0) throw DimensionError("stack_rows: parts must be rank-1");
  const int n = static_cast<int>(rows.size());
  Array data(static_cast<std::int64_t>(n) * d);
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (int i = 0; i < n; ++i) {
    require_rank(rows[i], 1, "stack_rows");
    if (rows[i].shape()[0] != d)
      throw DimensionError("stack_rows: lengths differ: " + std::to_string(d) + " vs " +
                           std::to_string(rows[i].shape()[0]));
    data.segment(static_cast<std::int64_t>(i) * d, d) = rows[i].value();
    impls.push_back(rows[i].ptr());
  }
  return detail::make_node({n, d}, std::move(data), rows, [impls, d](const Array& g) {
    for (std::size_t i = 0; i < impls.size(); ++i) {
      if (!impls[i]->requires_grad) continue;
      impls[i]->grad_tmp += g.segment(static_cast<std::int64_t>(i) * d, d);
    }
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank(table, 2, "gather_rows");
  const int v = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  Array data(static_cast<std::int64_t>(ids.size()) * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v)
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range for " +
                       std::to_string(v) + " rows");
    data.segment(static_cast<std::int64_t>(i) * d, d) =
        table.value().segment(static_cast<std::int64_t>(ids[i]) * d, d);
  }
  auto tp = table.ptr();
  std::vector<int> ids_c = ids;
  return detail::make_node({static_cast<int>(ids.size()), d}, std::move(data), {table},
                           [tp, ids_c, d](const Array& g) {
                             if (!tp->requires_grad) return;
                             for (std::size_t i = 0; i < ids_c.size(); ++i)
                               tp->grad_tmp.segment(static_cast<std::int64_t>(ids_c[i]) * d, d) +=
                                   g.segment(static_cast<std::int64_t>(i) * d, d);
                           });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const bool vector_input = x.ndim() == 1;
  const int n = vector_input ? 1 : x.shape()[0];
  const int d = vector_input ? x.shape()[0] : x.shape()[1];
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  if (gain.shape()[0] != d || bias.shape()[0] != d)
    throw DimensionError("layer_norm: width " + std::to_string(d) + " vs gain " +
                         std::to_string(gain.shape()[0]) + " / bias " +
                         std::to_string(bias.shape()[0]));

  Array xhat(static_cast<std::int64_t>(n) * d);
  Array inv_std(n);
  Array out(static_cast<std::int64_t>(n) * d);
  for (int r = 0; r < n; ++r) {
    auto xr = x.value().segment(static_cast<std::int64_t>(r) * d, d);
    const double mu = xr.mean();
    const double var = (xr - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    auto xh = xhat.segment(static_cast<std::int64_t>(r) * d, d);
    xh = (xr - mu) * inv_std(r);
    out.segment(static_cast<std::int64_t>(r) * d, d) = xh * gain.value() + bias.value();
  }

  auto xp = x.ptr(), gp = gain.ptr(), bp = bias.ptr();
  return detail::make_node(
      x.shape(), std::move(out), {x, gain, bias}, [xp, gp, bp, xhat, inv_std, n, d](const Array& g) {
        for (int r = 0; r < n; ++r) {
          auto gr = g.segment(static_cast<std::int64_t>(r) * d, d);
          auto xh = xhat.segment(static_cast<std::int64_t>(r) * d, d);
          if (gp->requires_grad) gp->grad_tmp += gr * xh;
          if (bp->requires_grad) bp->grad_tmp += gr;
          if (xp->requires_grad) {
            Array gxh = gr * gp->data;
            const double m1 = gxh.mean();
            const double m2 = (gxh * xh).mean();
            xp->grad_tmp.segment(static_cast<std::int64_t>(r) * d, d) +=
                inv_std(r) * (gxh - m1 - xh * m2);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Array factor(x.size());
  const double inv = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < factor.size(); ++i) factor(i) = keep(rng) ? inv : 0.0;
  auto xp = x.ptr();
  return detail::make_node(x.shape(), x.value() * factor, {x}, [xp, factor](const Array& g) {
    if (xp->requires_grad) xp->grad_tmp += g * factor;
  });
}

Tensor masked_softmax(const Tensor& scores, const MaskVec& keep) {
  require_rank(scores, 1, "masked_softmax");
  if (keep.size() != scores.size())
    throw DimensionError("masked_softmax: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(keep.size()) + " mask entries");
  if (!keep.any())
    throw DegenerateDistributionError("masked_softmax: all " + std::to_string(keep.size()) +
                                      " positions masked");
  Array p = softmax_keep(scores.value(), keep);
  auto sp = scores.ptr();
  Array pc = p;
  MaskVec kc = keep;
  return detail::make_node(scores.shape(), std::move(p), {scores}, [sp, pc, kc](const Array& g) {
    if (sp->requires_grad) softmax_backward(pc, kc, g, sp->grad_tmp);
  });
}

Tensor masked_softmax_rows(const Tensor& scores, const MaskMat& keep) {
  require_rank(scores, 2, "masked_softmax_rows");
  const int n = scores.shape()[0], m = scores.shape()[1];
  if (keep.rows() != n || keep.cols() != m)
    throw DimensionError("masked_softmax_rows: scores " + to_string(scores.shape()) + " vs mask " +
                         std::to_string(keep.rows()) + "x" + std::to_string(keep.cols()));
  Array p(static_cast<std::int64_t>(n) * m);
  for (int r = 0; r < n; ++r) {
    MaskVec krow = keep.row(r);
    if (!krow.any())
      throw DegenerateDistributionError("masked_softmax_rows: row " + std::to_string(r) +
                                        " fully masked");
    p.segment(static_cast<std::int64_t>(r) * m, m) =
        softmax_keep(scores.value().segment(static_cast<std::int64_t>(r) * m, m), krow);
  }
  auto sp = scores.ptr();
  Array pc = p;
  MaskMat kc = keep;
  return detail::make_node(scores.shape(), std::move(p), {scores}, [sp, pc, kc, n, m](const Array& g) {
    if (!sp->requires_grad) return;
    for (int r = 0; r < n; ++r) {
      MaskVec krow = kc.row(r);
      Array pr = pc.segment(static_cast<std::int64_t>(r) * m, m);
      Array gr = g.segment(static_cast<std::int64_t>(r) * m, m);
      Array gs = Array::Zero(m);
      softmax_backward(pr, krow, gr, gs);
      sp->grad_tmp.segment(static_cast<std::int64_t>(r) * m, m) += gs;
    }
  });
}

namespace {

// Returns (loss, probabilities) for one logits row.
std::pair<double, Array> ce_row(const Array& logits, int target) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits - m).exp().sum());
  Array p = (logits - lse).exp();
  return {lse - logits(target), std::move(p)};
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, int target) {
  require_rank(logits, 1, "cross_entropy");
  const int v = logits.shape()[0];
  if (target < 0 || target >= v)
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(v) + " classes");
  auto [loss, p] = ce_row(logits.value(), target);
  auto lp = logits.ptr();
  Array pc = std::move(p);
  Array data(1);
  data(0) = loss;
  return detail::make_node({}, std::move(data), {logits}, [lp, pc, target](const Array& g) {
    if (!lp->requires_grad) return;
    lp->grad_tmp += g(0) * pc;
    lp->grad_tmp(target) -= g(0);
  });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  require_rank(logits, 2, "cross_entropy_rows");
  const int n = logits.shape()[0], v = logits.shape()[1];
  if (static_cast<int>(targets.size()) != n)
    throw DimensionError("cross_entropy_rows: " + std::to_string(n) + " rows vs " +
                         std::to_string(targets.size()) + " targets");
  Array probs(static_cast<std::int64_t>(n) * v);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    if (targets[r] < 0 || targets[r] >= v)
      throw IndexError("cross_entropy_rows: target " + std::to_string(targets[r]) +
                       " out of range for " + std::to_string(v) + " classes");
    auto [loss, p] = ce_row(logits.value().segment(static_cast<std::int64_t>(r) * v, v), targets[r]);
    probs.segment(static_cast<std::int64_t>(r) * v, v) = p;
    total += loss;
  }
  auto lp = logits.ptr();
  std::vector<int> tc = targets;
  Array data(1);
  data(0) = total / n;
  return detail::make_node({}, std::move(data), {logits}, [lp, probs, tc, n, v](const Array& g) {
    if (!lp->requires_grad) return;
    const double s = g(0) / n;
    for (int r = 0; r < n; ++r) {
      lp->grad_tmp.segment(static_cast<std::int64_t>(r) * v, v) +=
          s * probs.segment(static_cast<std::int64_t>(r) * v, v);
      lp->grad_tmp(static_cast<std::int64_t>(r) * v + tc[r]) -= s;
    }
  });
}

namespace {

double clamp_prob(double p) { return std::min(std::max(p, kProbEps), 1.0 - kProbEps); }

}  // namespace

Tensor binary_cross_entropy(const Tensor& prob, int label) {
  require_rank(prob, 0, "binary_cross_entropy");
  if (label != 0 && label != 1)
    throw ContractError("binary_cross_entropy: label must be 0 or 1, got " + std::to_string(label));
  const double p = clamp_prob(prob.item());
  Array data(1);
  data(0) = label == 1 ? -std::log(p) : -std::log(1.0 - p);
  auto pp = prob.ptr();
  return detail::make_node({}, std::move(data), {prob}, [pp, p, label](const Array& g) {
    if (pp->requires_grad) pp->grad_tmp(0) += g(0) * (p - label) / (p * (1.0 - p));
  });
}

Tensor binary_cross_entropy_many(const Tensor& probs, const std::vector<int>& labels,
                                 const MaskVec& keep) {
  require_rank(probs, 1, "binary_cross_entropy_many");
  const int n = probs.shape()[0];
  if (static_cast<int>(labels.size()) != n || keep.size() != n)
    throw DimensionError("binary_cross_entropy_many: " + std::to_string(n) + " probs vs " +
                         std::to_string(labels.size()) + " labels vs " +
                         std::to_string(keep.size()) + " mask entries");
  int live = 0;
  double total = 0.0;
  Array clamped(n);
  for (int i = 0; i < n; ++i) {
    clamped(i) = clamp_prob(probs.value()(i));
    if (!keep(i)) continue;
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("binary_cross_entropy_many: label must be 0 or 1, got " +
                          std::to_string(labels[i]));
    ++live;
    total += labels[i] == 1 ? -std::log(clamped(i)) : -std::log(1.0 - clamped(i));
  }
  if (live == 0) throw ContractError("binary_cross_entropy_many: no live positions");
  auto pp = probs.ptr();
  std::vector<int> lc = labels;
  MaskVec kc = keep;
  Array data(1);
  data(0) = total / live;
  return detail::make_node({}, std::move(data), {probs},
                           [pp, clamped, lc, kc, live](const Array& g) {
                             if (!pp->requires_grad) return;
                             const double s = g(0) / live;
                             for (Eigen::Index i = 0; i < clamped.size(); ++i) {
                               if (!kc(i)) continue;
                               const double p = clamped(i);
                               pp->grad_tmp(i) += s * (p - lc[i]) / (p * (1.0 - p));
                             }
                           });
}

}  // namespace csa
