#include "csa/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace csa {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ContractError("shape extent must be positive, got " + std::to_string(e));
    n *= e;
  }
  return n;
}

std::string to_string(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
  out << "]";
  return out.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  std::int64_t n = numel(shape);
  impl->shape = std::move(shape);
  impl->data = Array::Zero(n);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.value().setConstant(value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full(Shape{}, value, requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw DimensionError("from: shape " + to_string(shape) + " expects " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  Array a = Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size()));
  return from_array(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::from_array(Shape shape, Array values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw DimensionError("from_array: shape " + to_string(shape) + " expects " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

int Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[0];
  throw ContractError("rows() on rank-" + std::to_string(s.size()) + " tensor");
}

int Tensor::cols() const {
  const Shape& s = shape();
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[1];
  throw ContractError("cols() on rank-" + std::to_string(s.size()) + " tensor");
}

void Tensor::set_requires_grad(bool on) {
  TensorImpl& t = impl();
  t.requires_grad = on;
  if (on && t.grad.size() != t.data.size()) t.grad = Array::Zero(t.data.size());
}

const Array& Tensor::grad() const {
  const TensorImpl& t = impl();
  if (!t.requires_grad) throw ContractError("grad() on a tensor without requires_grad");
  return t.grad;
}

void Tensor::zero_grad() {
  TensorImpl& t = impl();
  if (t.requires_grad) t.grad.setZero();
}

double Tensor::operator()(int i) const {
  if (ndim() != 1) throw ContractError("1-index access on rank-" + std::to_string(ndim()));
  return impl().data(i);
}

double Tensor::operator()(int i, int j) const {
  if (ndim() != 2) throw ContractError("2-index access on rank-" + std::to_string(ndim()));
  return impl().data(static_cast<std::int64_t>(i) * shape()[1] + j);
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
  return impl().data(0);
}

Eigen::Map<const RowMat> Tensor::mat() const {
  const TensorImpl& t = impl();
  if (t.shape.size() == 2)
    return {t.data.data(), t.shape[0], t.shape[1]};
  if (t.shape.size() == 1)
    return {t.data.data(), t.shape[0], 1};
  throw ContractError("mat() on rank-" + std::to_string(t.shape.size()) + " tensor");
}

Eigen::Map<const Eigen::VectorXd> Tensor::vec() const {
  const TensorImpl& t = impl();
  if (t.shape.size() != 1) throw ContractError("vec() on rank-" + std::to_string(t.shape.size()));
  return {t.data.data(), t.data.size()};
}

Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < t.value().size(); ++i) t.value()(i) = dist(rng);
  return t;
}

Tensor xavier(int fan_out, int fan_in, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return uniform(Shape{fan_out, fan_in}, -limit, limit, rng, true);
}

namespace {
thread_local Tape* g_current_tape = nullptr;
thread_local int g_no_grad_depth = 0;
}  // namespace

Tape::Tape() {
  prev_ = g_current_tape;
  g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() {
  return g_no_grad_depth > 0 ? nullptr : g_current_tape;
}

void Tape::record(TapeNode node) {
  auto touch = [this](const std::shared_ptr<TensorImpl>& t) {
    if (seen_.insert(t.get()).second) touched_.push_back(t);
  };
  touch(node.out);
  for (const auto& in : node.inputs) touch(in);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1 || loss.ndim() != 0)
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));

  for (const auto& t : touched_) {
    if (t->grad_tmp.size() != t->data.size()) t->grad_tmp = Array::Zero(t->data.size());
    else t->grad_tmp.setZero();
  }
  if (loss.ptr()->grad_tmp.size() != 1) loss.ptr()->grad_tmp = Array::Zero(1);
  loss.ptr()->grad_tmp(0) = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward(it->out->grad_tmp);
  }

  for (const auto& t : touched_) {
    if (t->leaf && t->requires_grad) t->grad += t->grad_tmp;
  }
  // A loss that is itself a requires_grad leaf gets d(loss)/d(loss) = 1.
  const auto& lp = loss.ptr();
  if (lp->leaf && lp->requires_grad && !seen_.count(lp.get())) lp->grad += lp->grad_tmp;
}

NoGrad::NoGrad() { ++g_no_grad_depth; }
NoGrad::~NoGrad() { --g_no_grad_depth; }

namespace detail {

Tensor make_node(Shape shape, Array data, std::vector<Tensor> inputs, BackwardFn backward) {
  if (numel(shape) != data.size())
    throw DimensionError("make_node: shape " + to_string(shape) + " vs data size " +
                         std::to_string(data.size()));
  if (!data.allFinite())
    throw NumericsError("non-finite value produced by forward op (output shape " +
                        to_string(shape) + ")");

  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->leaf = true;
  Tensor out(impl);

  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  Tape* tape = Tape::current();
  if (needs && tape) {
    impl->leaf = false;
    impl->requires_grad = true;
    TapeNode node;
    node.out = impl;
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.ptr());
    node.backward = std::move(backward);
    tape->record(std::move(node));
  }
  return out;
}

}  // namespace detail

void ParamMap::add(const std::string& name, const Tensor& t) {
  if (find(name)) throw ContractError("duplicate parameter name: " + name);
  items.emplace_back(name, t);
}

Tensor* ParamMap::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

void ParamMap::zero_grad() {
  for (auto& [n, t] : items) t.zero_grad();
}

}  // namespace csa
