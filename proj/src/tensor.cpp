#include "multiscl/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "multiscl/simd/kernels.hpp"

namespace multiscl {

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool released = false;
  OpKind op = OpKind::Leaf;
  std::vector<Tensor> inputs;
  std::function<void(const Tensor&)> backward;
};

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<int> g_fault{static_cast<int>(OpKind::Leaf)};

double fault(OpKind op) {
  return g_fault.load(std::memory_order_relaxed) == static_cast<int>(op) ? 1.5 : 1.0;
}

const simd::KernelTable& K() { return simd::active(); }

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void require_2d(const Tensor& a, const char* what) {
  if (a.dim() != 2) {
    throw DimensionError(std::string(what) + ": expected a 2-D tensor, got " +
                         shape_str(a.shape()));
  }
}

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
  }
}

// grad += g
void accumulate(const Tensor& t, std::span<const double> g, double factor = 1.0) {
  auto dst = t.mutable_grad();
  K().axpy(factor, g.data(), dst.data(), g.size());
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddRow: return "add_row";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::PoolMean: return "pool_mean";
    case OpKind::PoolMax: return "pool_max";
    case OpKind::Sum: return "sum";
    case OpKind::NormalizeRows: return "normalize_rows";
    case OpKind::Cosine: return "cosine_sim";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Concat: return "concat";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::PairwiseMul: return "pairwise_mul";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

// ---- Tensor ----

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(numel(shape), value);
  return from(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() const { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() const {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

OpKind Tensor::op() const { return impl_->op; }
bool Tensor::is_leaf() const { return impl_->op == OpKind::Leaf; }

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }
Tensor Tensor::clone(bool requires_grad) const { return from(shape(), impl_->data, requires_grad); }

// ---- graph ----

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Tensor make_op_result(OpKind op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const Tensor&)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data), false);
  if (!t_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto& impl = *out.impl_;
  impl.requires_grad = true;
  impl.op = op;
  impl.inputs = std::move(inputs);
  impl.backward = std::move(backward);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss) throw GraphError("backward() on an empty tensor");
  if (loss.size() != 1) {
    throw GraphError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto root = loss.impl();
  if (root->released) throw GraphError("backward() already ran on this graph");
  if (!root->requires_grad) throw GraphError("loss does not depend on any trainable tensor");

  // Iterative post-order DFS; reversed, it is a topological order from the loss.
  std::vector<Tensor::Impl*> order;
  std::unordered_set<Tensor::Impl*> seen;
  std::vector<std::pair<Tensor::Impl*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Tensor::Impl* child = node->inputs[next++].impl().get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor::Impl* node = *it;
    if (!node->backward) continue;
    if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0);
    // Non-owning handle for the callback.
    Tensor self(std::shared_ptr<Tensor::Impl>(std::shared_ptr<Tensor::Impl>{}, node));
    node->backward(self);
  }
  for (Tensor::Impl* node : order) {
    if (node->op == OpKind::Leaf) continue;
    node->backward = nullptr;
    node->inputs.clear();
    node->released = true;
  }
}

namespace testing {
void inject_backward_fault(OpKind op) { g_fault.store(static_cast<int>(op)); }
OpKind injected_fault() { return static_cast<OpKind>(g_fault.load()); }
}  // namespace testing

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  K().gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_op_result(OpKind::Matmul, {m, n}, std::move(out), {a, b},
                        [a, b, m, k, n](const Tensor& y) mutable {
                          const double f = fault(OpKind::Matmul);
                          auto g = y.grad();
                          std::vector<double> gf;
                          const double* gp = g.data();
                          if (f != 1.0) {
                            gf.assign(g.begin(), g.end());
                            for (double& v : gf) v *= f;
                            gp = gf.data();
                          }
                          if (a.requires_grad()) {
                            K().gemm_nt_acc(m, k, n, gp, b.data().data(), a.mutable_grad().data());
                          }
                          if (b.requires_grad()) {
                            K().gemm_tn_acc(k, n, m, a.data().data(), gp, b.mutable_grad().data());
                          }
                        });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_op_result(OpKind::Transpose, {n, m}, std::move(out), {a},
                        [a, m, n](const Tensor& y) mutable {
                          const double f = fault(OpKind::Transpose);
                          auto g = y.grad();
                          auto dx = a.mutable_grad();
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += f * g[j * m + i];
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result(OpKind::Reshape, std::move(shape), std::move(out), {a},
                        [a](const Tensor& y) mutable {
                          accumulate(a, y.grad(), fault(OpKind::Reshape));
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  K().add(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op_result(OpKind::Add, a.shape(), std::move(out), {a, b},
                        [a, b](const Tensor& y) mutable {
                          const double f = fault(OpKind::Add);
                          if (a.requires_grad()) accumulate(a, y.grad(), f);
                          if (b.requires_grad()) accumulate(b, y.grad(), f);
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  K().sub(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op_result(OpKind::Sub, a.shape(), std::move(out), {a, b},
                        [a, b](const Tensor& y) mutable {
                          const double f = fault(OpKind::Sub);
                          if (a.requires_grad()) accumulate(a, y.grad(), f);
                          if (b.requires_grad()) accumulate(b, y.grad(), -f);
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  K().mul(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op_result(OpKind::Mul, a.shape(), std::move(out), {a, b},
                        [a, b](const Tensor& y) mutable {
                          const double f = fault(OpKind::Mul);
                          std::vector<double> tmp(y.size());
                          if (a.requires_grad()) {
                            K().mul(y.grad().data(), b.data().data(), tmp.data(), tmp.size());
                            accumulate(a, tmp, f);
                          }
                          if (b.requires_grad()) {
                            K().mul(y.grad().data(), a.data().data(), tmp.data(), tmp.size());
                            accumulate(b, tmp, f);
                          }
                        });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.dim() != 1 || x.cols() != bias.size() || x.dim() > 2) {
    throw DimensionError("add_row: cannot broadcast " + shape_str(bias.shape()) + " over " +
                         shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    K().add(x.data().data() + i * n, bias.data().data(), out.data() + i * n, n);
  }
  return make_op_result(OpKind::AddRow, x.shape(), std::move(out), {x, bias},
                        [x, bias, m, n](const Tensor& y) mutable {
                          const double f = fault(OpKind::AddRow);
                          auto g = y.grad();
                          if (x.requires_grad()) accumulate(x, g, f);
                          if (bias.requires_grad()) {
                            auto db = bias.mutable_grad();
                            for (std::size_t i = 0; i < m; ++i) K().axpy(f, g.data() + i * n, db.data(), n);
                          }
                        });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  K().scale(a.data().data(), s, out.data(), out.size());
  return make_op_result(OpKind::Scale, a.shape(), std::move(out), {a},
                        [a, s](const Tensor& y) mutable {
                          accumulate(a, y.grad(), s * fault(OpKind::Scale));
                        });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return make_op_result(OpKind::Relu, a.shape(), std::move(out), {a},
                        [a](const Tensor& y) mutable {
                          const double f = fault(OpKind::Relu);
                          auto g = y.grad();
                          auto x = a.data();
                          auto dx = a.mutable_grad();
                          for (std::size_t i = 0; i < dx.size(); ++i) {
                            if (x[i] > 0.0) dx[i] += f * g[i];
                          }
                        });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return make_op_result(OpKind::Tanh, a.shape(), std::move(out), {a},
                        [a](const Tensor& y) mutable {
                          const double f = fault(OpKind::Tanh);
                          auto g = y.grad();
                          auto v = y.data();
                          auto dx = a.mutable_grad();
                          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += f * g[i] * (1.0 - v[i] * v[i]);
                        });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  return make_op_result(OpKind::Exp, a.shape(), std::move(out), {a},
                        [a](const Tensor& y) mutable {
                          const double f = fault(OpKind::Exp);
                          auto g = y.grad();
                          auto v = y.data();
                          auto dx = a.mutable_grad();
                          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += f * g[i] * v[i];
                        });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericError("log: non-positive input");
    out[i] = std::log(x[i]);
  }
  return make_op_result(OpKind::Log, a.shape(), std::move(out), {a},
                        [a](const Tensor& y) mutable {
                          const double f = fault(OpKind::Log);
                          auto g = y.grad();
                          auto x = a.data();
                          auto dx = a.mutable_grad();
                          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += f * g[i] / x[i];
                        });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.dim() > 2) throw DimensionError("softmax_rows: expected 1-D or 2-D, got " + shape_str(x.shape()));
  require_finite(x.data(), "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = in.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(r[j] - mx));
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }
  return make_op_result(OpKind::SoftmaxRows, x.shape(), std::move(out), {x},
                        [x, m, n](const Tensor& y) mutable {
                          const double f = fault(OpKind::SoftmaxRows);
                          auto g = y.grad();
                          auto p = y.data();
                          auto dx = x.mutable_grad();
                          for (std::size_t i = 0; i < m; ++i) {
                            const double dotgp = K().dot(g.data() + i * n, p.data() + i * n, n);
                            for (std::size_t j = 0; j < n; ++j) {
                              const std::size_t t = i * n + j;
                              dx[t] += f * p[t] * (g[t] - dotgp);
                            }
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.dim() > 2 || gamma.dim() != 1 || beta.dim() != 1 || gamma.size() != x.cols() ||
      beta.size() != x.cols()) {
    throw DimensionError("layer_norm: shapes " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::size_t m = x.rows(), k = x.cols();
  if (k < 2) throw DimensionError("layer_norm: need at least 2 features per row");
  std::vector<double> out(x.size()), xhat(x.size()), inv_std(m);
  auto in = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = in.data() + i * k;
    double mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean += r[j];
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t j = 0; j < k; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(k);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t t = i * k + j;
      xhat[t] = (r[j] - mean) * inv_std[i];
      out[t] = gm[j] * xhat[t] + bt[j];
    }
  }
  return make_op_result(
      OpKind::LayerNorm, x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, m, k, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& y) mutable {
        const double f = fault(OpKind::LayerNorm);
        auto g = y.grad();
        auto gm = gamma.data();
        if (gamma.requires_grad()) {
          auto dg = gamma.mutable_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) dg[j] += f * g[i * k + j] * xhat[i * k + j];
        }
        if (beta.requires_grad()) {
          auto db = beta.mutable_grad();
          for (std::size_t i = 0; i < m; ++i) K().axpy(f, g.data() + i * k, db.data(), k);
        }
        if (x.requires_grad()) {
          auto dx = x.mutable_grad();
          const double kk = static_cast<double>(k);
          std::vector<double> dxhat(k);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
              dxhat[j] = g[i * k + j] * gm[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[i * k + j];
            }
            mean_d /= kk;
            mean_dx /= kk;
            for (std::size_t j = 0; j < k; ++j) {
              dx[i * k + j] += f * inv_std[i] * (dxhat[j] - mean_d - xhat[i * k + j] * mean_dx);
            }
          }
        }
      });
}

Tensor pool(const Tensor& x, PoolKind kind) {
  if (x.dim() > 2) throw DimensionError("pool: expected 2-D, got " + shape_str(x.shape()));
  const std::size_t m = x.dim() == 2 ? x.shape()[0] : 1;
  const std::size_t k = x.cols();
  if (m == 0 || x.size() == 0) throw DimensionError("pool: empty sequence");
  auto in = x.data();
  std::vector<double> out(k);
  if (kind == PoolKind::Mean) {
    for (std::size_t i = 0; i < m; ++i) K().axpy(1.0, in.data() + i * k, out.data(), k);
    const double inv = 1.0 / static_cast<double>(m);
    for (double& v : out) v *= inv;
    return make_op_result(OpKind::PoolMean, {k}, std::move(out), {x},
                          [x, m, k](const Tensor& y) mutable {
                            const double f = fault(OpKind::PoolMean) / static_cast<double>(m);
                            auto dx = x.mutable_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              K().axpy(f, y.grad().data(), dx.data() + i * k, k);
                          });
  }
  std::vector<std::size_t> arg(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    double best = in[j];
    for (std::size_t i = 1; i < m; ++i) {
      if (in[i * k + j] > best) {
        best = in[i * k + j];
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  return make_op_result(OpKind::PoolMax, {k}, std::move(out), {x},
                        [x, k, arg = std::move(arg)](const Tensor& y) mutable {
                          const double f = fault(OpKind::PoolMax);
                          auto g = y.grad();
                          auto dx = x.mutable_grad();
                          for (std::size_t j = 0; j < k; ++j) dx[arg[j] * k + j] += f * g[j];
                        });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result(OpKind::Sum, {}, {s}, {a}, [a](const Tensor& y) mutable {
    const double g = y.grad()[0] * fault(OpKind::Sum);
    for (double& d : a.mutable_grad()) d += g;
  });
}

Tensor normalize_rows(const Tensor& x) {
  if (x.dim() > 2) throw DimensionError("normalize_rows: expected 2-D, got " + shape_str(x.shape()));
  const std::size_t m = x.rows(), k = x.cols();
  std::vector<double> out(x.size()), inv_norm(m);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double nrm = std::sqrt(K().dot(in.data() + i * k, in.data() + i * k, k));
    if (!(nrm > 0.0)) throw NumericError("normalize_rows: zero-norm row " + std::to_string(i));
    inv_norm[i] = 1.0 / nrm;
    K().scale(in.data() + i * k, inv_norm[i], out.data() + i * k, k);
  }
  return make_op_result(OpKind::NormalizeRows, x.shape(), std::move(out), {x},
                        [x, m, k, inv_norm = std::move(inv_norm)](const Tensor& y) mutable {
                          const double f = fault(OpKind::NormalizeRows);
                          auto g = y.grad();
                          auto u = y.data();
                          auto dx = x.mutable_grad();
                          for (std::size_t i = 0; i < m; ++i) {
                            const double ug = K().dot(u.data() + i * k, g.data() + i * k, k);
                            for (std::size_t j = 0; j < k; ++j) {
                              const std::size_t t = i * k + j;
                              dx[t] += f * inv_norm[i] * (g[t] - u[t] * ug);
                            }
                          }
                        });
}

Tensor cosine_sim(const Tensor& u, const Tensor& v) {
  if (u.dim() != 1) throw DimensionError("cosine_sim: expected 1-D operands, got " + shape_str(u.shape()));
  require_same_shape(u, v, "cosine_sim");
  const std::size_t n = u.size();
  const double uv = K().dot(u.data().data(), v.data().data(), n);
  const double nu = std::sqrt(K().dot(u.data().data(), u.data().data(), n));
  const double nv = std::sqrt(K().dot(v.data().data(), v.data().data(), n));
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericError("cosine_sim: zero-norm operand");
  const double c = uv / (nu * nv);
  return make_op_result(OpKind::Cosine, {}, {c}, {u, v},
                        [u, v, n, nu, nv, c](const Tensor& y) mutable {
                          const double g = y.grad()[0] * fault(OpKind::Cosine);
                          auto ud = u.data();
                          auto vd = v.data();
                          if (u.requires_grad()) {
                            auto du = u.mutable_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              du[i] += g * (vd[i] / (nu * nv) - c * ud[i] / (nu * nu));
                          }
                          if (v.requires_grad()) {
                            auto dv = v.mutable_grad();
                            for (std::size_t i = 0; i < n; ++i)
                              dv[i] += g * (ud[i] / (nu * nv) - c * vd[i] / (nv * nv));
                          }
                        });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim() != 2 || p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      auto d = parts[p].data();
      std::copy_n(d.data() + i * widths[p], widths[p], out.data() + i * total + off);
      off += widths[p];
    }
  }
  return make_op_result(OpKind::ConcatCols, {m, total}, std::move(out), parts,
                        [parts, widths, m, total](const Tensor& y) mutable {
                          const double f = fault(OpKind::ConcatCols);
                          auto g = y.grad();
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < parts.size(); ++p) {
                            if (parts[p].requires_grad()) {
                              auto dp = parts[p].mutable_grad();
                              for (std::size_t i = 0; i < m; ++i)
                                K().axpy(f, g.data() + i * total + off, dp.data() + i * widths[p], widths[p]);
                            }
                            off += widths[p];
                          }
                        });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.dim() != 1) throw DimensionError("concat: expected 1-D parts, got " + shape_str(p.shape()));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t total = out.size();
  return make_op_result(OpKind::Concat, {total}, std::move(out), parts,
                        [parts](const Tensor& y) mutable {
                          const double f = fault(OpKind::Concat);
                          auto g = y.grad();
                          std::size_t off = 0;
                          for (auto& p : parts) {
                            if (p.requires_grad()) accumulate(p, g.subspan(off, p.size()), f);
                            off += p.size();
                          }
                        });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t k = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * k);
  for (const auto& r : rows) {
    if (r.dim() != 1 || r.size() != k) {
      throw DimensionError("stack_rows: row shape " + shape_str(r.shape()) + " vs " +
                           shape_str(rows.front().shape()));
    }
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return make_op_result(OpKind::StackRows, {rows.size(), k}, std::move(out), rows,
                        [rows, k](const Tensor& y) mutable {
                          const double f = fault(OpKind::StackRows);
                          auto g = y.grad();
                          for (std::size_t i = 0; i < rows.size(); ++i) {
                            if (rows[i].requires_grad()) accumulate(rows[i], g.subspan(i * k, k), f);
                          }
                        });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d(table, "gather_rows");
  const std::size_t v = table.shape()[0], k = table.shape()[1];
  std::vector<double> out(ids.size() * k);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) +
                           " out of range for table of " + std::to_string(v) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * k, k, out.data() + i * k);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_op_result(OpKind::GatherRows, {ids.size(), k}, std::move(out), {table},
                        [table, k, idx = std::move(idx)](const Tensor& y) mutable {
                          const double f = fault(OpKind::GatherRows);
                          auto g = y.grad();
                          auto dt = table.mutable_grad();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            K().axpy(f, g.data() + i * k, dt.data() + idx[i] * k, k);
                        });
}

Tensor pairwise_mul(const Tensor& a, const Tensor& b) {
  require_2d(a, "pairwise_mul");
  require_2d(b, "pairwise_mul");
  if (a.cols() != b.cols()) {
    throw DimensionError("pairwise_mul: feature mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
  std::vector<double> out(m * n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      K().mul(a.data().data() + i * k, b.data().data() + j * k, out.data() + (i * n + j) * k, k);
  return make_op_result(OpKind::PairwiseMul, {m * n, k}, std::move(out), {a, b},
                        [a, b, m, n, k](const Tensor& y) mutable {
                          const double f = fault(OpKind::PairwiseMul);
                          auto g = y.grad();
                          std::vector<double> tmp(k);
                          if (a.requires_grad()) {
                            auto da = a.mutable_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) {
                                K().mul(g.data() + (i * n + j) * k, b.data().data() + j * k, tmp.data(), k);
                                K().axpy(f, tmp.data(), da.data() + i * k, k);
                              }
                          }
                          if (b.requires_grad()) {
                            auto db = b.mutable_grad();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) {
                                K().mul(g.data() + (i * n + j) * k, a.data().data() + i * k, tmp.data(), k);
                                K().axpy(f, tmp.data(), db.data() + j * k, k);
                              }
                          }
                        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_2d(logits, "cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  auto z = logits.data();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(c) + ")");
    }
    const double* r = z.data() + i * c;
    const double mx = *std::max_element(r, r + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (probs[i * c + j] = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    loss += (mx + std::log(s)) - r[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_op_result(OpKind::CrossEntropy, {}, {loss}, {logits},
                        [logits, n, c, probs = std::move(probs), ys = std::move(ys)](const Tensor& y) mutable {
                          const double g = y.grad()[0] * fault(OpKind::CrossEntropy) / static_cast<double>(n);
                          auto dz = logits.mutable_grad();
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                              const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                              dz[i * c + j] += g * (probs[i * c + j] - onehot);
                            }
                        });
}

}  // namespace multiscl
