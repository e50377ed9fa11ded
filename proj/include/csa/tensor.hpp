#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csa/error.hpp"

namespace csa {

// Flat row-major storage; Eigen is the math substrate for every kernel.
using Array = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskVec = Eigen::Array<bool, Eigen::Dynamic, 1>;
using MaskMat = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Extents, outermost first. Rank 0 = scalar, rank 1 = vector, rank 2 = matrix.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string to_string(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl {
  Shape shape;
  Array data;      // numel(shape) entries, row-major
  Array grad;      // persistent accumulator; allocated iff requires_grad
  Array grad_tmp;  // per-backward-pass buffer, managed by Tape
  bool requires_grad = false;
  bool leaf = true;
};

// Value-semantics handle over shared storage. Copies alias; storage itself is
// never mutated by ops, only by explicit value() writes (parameter updates).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  int ndim() const { return static_cast<int>(impl().shape.size()); }
  std::int64_t size() const { return impl().data.size(); }
  int rows() const;
  int cols() const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool on);

  const Array& value() const { return impl().data; }
  Array& value() { return impl().data; }
  const Array& grad() const;
  void zero_grad();

  double operator[](std::int64_t flat) const { return impl().data(flat); }
  double operator()(int i) const;
  double operator()(int i, int j) const;
  double item() const;  // rank-0 access

  // Rank-2 matrix view (rank-1 maps as a column vector).
  Eigen::Map<const RowMat> mat() const;
  Eigen::Map<const Eigen::VectorXd> vec() const;

  const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }

 private:
  TensorImpl& impl() const;
  std::shared_ptr<TensorImpl> impl_;
};

// Seeded initializers.
Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, bool requires_grad = false);
Tensor xavier(int fan_out, int fan_in, std::mt19937_64& rng);  // [fan_out x fan_in] parameter

using BackwardFn = std::function<void(const Array& out_grad)>;

struct TapeNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> out;
  BackwardFn backward;
};

// Execution-ordered op record. Construction activates the tape for the current
// thread; ops record onto the active tape when an input requires grad.
// backward() replays the record in exact reverse order.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Accumulates d(loss)/d(leaf) into every requires_grad leaf's grad.
  // Repeated calls accumulate; zero_grad resets.
  void backward(const Tensor& loss);

  void record(TapeNode node);
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<TapeNode> nodes_;
  std::vector<std::shared_ptr<TensorImpl>> touched_;  // deduplicated
  std::unordered_set<TensorImpl*> seen_;
  Tape* prev_ = nullptr;
};

// Scope that suppresses recording (inference / oracle evaluation).
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

namespace detail {

// Every op funnels through here: finiteness check, requires_grad propagation,
// recording. `backward` accumulates into the inputs' grad_tmp buffers.
Tensor make_node(Shape shape, Array data, std::vector<Tensor> inputs, BackwardFn backward);

inline Array& grad_of(const std::shared_ptr<TensorImpl>& t) { return t->grad_tmp; }

}  // namespace detail

// Named parameter collection; iteration order is registration order and is the
// checkpoint record order.
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t);
  Tensor* find(const std::string& name);
  void zero_grad();
};

}  // namespace csa
