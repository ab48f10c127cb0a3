#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace multiscl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};

struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class OpKind {
  Leaf,
  Matmul,
  Transpose,
  Reshape,
  Add,
  Sub,
  Mul,
  AddRow,
  Scale,
  Relu,
  Tanh,
  Exp,
  Log,
  SoftmaxRows,
  LayerNorm,
  PoolMean,
  PoolMax,
  Sum,
  NormalizeRows,
  Cosine,
  ConcatCols,
  Concat,
  StackRows,
  GatherRows,
  PairwiseMul,
  CrossEntropy,
  Custom,
};

const char* op_name(OpKind op);

// Dense float64 tensor with an optional define-by-run graph node.
//
// Tensor is a shared handle: copies alias the same buffers, which is what
// lets a parameter handle outlive a forward pass and still receive the
// gradient accumulated through it.
class Tensor {
 public:
  struct Impl;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  explicit operator bool() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const;
  // For 2-D tensors. A 1-D tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data() const;  // handle semantics: shared storage
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;  // allocates (zeroed) on first use
  void zero_grad() const;
  void clear_grad() const;

  OpKind op() const;
  bool is_leaf() const;

  // Fresh leaf holding a copy of the values; no graph, no gradient.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;

  friend Tensor make_op_result(OpKind, Shape, std::vector<double>,
                               std::vector<Tensor>,
                               std::function<void(const Tensor&)>);
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Builds a graph node. `backward` receives the output tensor (whose grad() is
// populated) and must accumulate into the inputs' mutable_grad(). When no
// input requires a gradient, or grad mode is off, the result is a plain leaf.
Tensor make_op_result(OpKind op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const Tensor&)> backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Seeds d(loss)/d(loss) = 1 and propagates through the graph in reverse
// topological order. The graph is released afterwards; a second call on the
// same loss throws GraphError.
void backward(const Tensor& loss);

// ---- differentiable operations ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[m x n] + bias[n], broadcast over rows
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

enum class PoolKind { Mean, Max };
Tensor pool(const Tensor& x, PoolKind kind);

Tensor sum(const Tensor& a);
Tensor normalize_rows(const Tensor& x);
Tensor cosine_sim(const Tensor& u, const Tensor& v);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Row (i * n + j) of the result is a[i] ⊙ b[j].
Tensor pairwise_mul(const Tensor& a, const Tensor& b);

// Mean over rows of -log softmax(logits[r])[labels[r]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

namespace testing {
// Scales the gradient emitted by one op's backward rule by 1.5. Used as a
// negative control for the gradient checker. OpKind::Leaf disables it.
void inject_backward_fault(OpKind op);
OpKind injected_fault();
}  // namespace testing

}  // namespace multiscl
