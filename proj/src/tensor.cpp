#include "tmepsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tmepsr/errors.hpp"
#include "tmepsr/kernels.hpp"

namespace tmepsr {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor data size " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  return node;
}

void require_finite(std::span<const double> values, const char* op_name) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op_name);
  }
}

bool wants_grad(const Tensor& t) { return t.node()->requires_grad; }

// Shape of a matrix view: rows fold every axis but the last.
std::size_t view_rows(const Shape& s) { return s.empty() ? 1 : shape_size(s) / s.back(); }
std::size_t view_cols(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_matrix(const Tensor& t, const char* op_name) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op_name) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), false));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::scalar(double value) { return constant({1, 1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::dim(std::size_t axis) const { return node_->shape.at(axis); }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return view_rows(node_->shape); }
std::size_t Tensor::cols() const { return view_cols(node_->shape); }
std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf) throw std::logic_error("mutable_data() on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = previous_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  const auto& root = loss.node();
  if (root->is_leaf) {
    if (root->requires_grad) root->grad_buffer()[0] += 1.0;
    return;
  }
  auto it = std::find(nodes_.rbegin(), nodes_.rend(), root);
  if (it == nodes_.rend()) throw std::logic_error("backward(): loss was not recorded on this tape");
  root->grad_buffer()[0] += 1.0;
  for (; it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw std::logic_error("backward(): no active tape");
  tape->backward(loss);
}

Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn, const char* op_name) {
  require_finite(value, op_name);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  Tape* tape = Tape::active();
  const bool any_grad = std::any_of(inputs.begin(), inputs.end(), wants_grad);
  if (tape != nullptr && any_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward_fn);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

namespace ops {

namespace {

// Input i of a recorded node, or nullptr when it does not need a gradient.
detail::Node* grad_target(detail::Node& self, std::size_t i) {
  detail::Node* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.size();
  const auto av = a.data();
  const auto bv = b.data();
  auto ai = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto bi = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::add: out[i] = ai(i) + bi(i); break;
      case Binary::sub: out[i] = ai(i) - bi(i); break;
      case Binary::mul: out[i] = ai(i) * bi(i); break;
    }
  }
  return make_op_result(
      big.shape(), std::move(out), {a, b},
      [kind, a_scalar, b_scalar, n](detail::Node& self) {
        const auto& g = self.grad;
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* ta = grad_target(self, 0)) {
          auto ga = ta->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == Binary::mul) d *= b_scalar ? bv[0] : bv[i];
            ga[a_scalar ? 0 : i] += d;
          }
        }
        if (auto* tb = grad_target(self, 1)) {
          auto gb = tb->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == Binary::sub) d = -d;
            if (kind == Binary::mul) d *= a_scalar ? av[0] : av[i];
            gb[b_scalar ? 0 : i] += d;
          }
        }
      },
      name);
}

// Pointwise op whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv, const char* name) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_op_result(
      a.shape(), std::move(out), {a},
      [deriv](detail::Node& self) {
        auto* ta = grad_target(self, 0);
        if (!ta) return;
        auto ga = ta->grad_buffer();
        const auto& x = ta->value;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
      },
      name);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_op_result(
      {m, n}, std::move(out), {a, b},
      [m, n, k](detail::Node& self) {
        const double* g = self.grad.data();
        if (auto* ta = grad_target(self, 0)) {
          // dA = dC · Bᵀ
          kernels::gemm_nt(m, k, n, g, self.inputs[1]->value.data(), ta->grad_buffer().data(), true);
        }
        if (auto* tb = grad_target(self, 1)) {
          // dB = Aᵀ · dC
          kernels::gemm_tn(k, n, m, self.inputs[0]->value.data(), g, tb->grad_buffer().data(), true);
        }
      },
      "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n);
  kernels::gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_op_result(
      {m, n}, std::move(out), {a, b},
      [m, n, k](detail::Node& self) {
        const double* g = self.grad.data();
        if (auto* ta = grad_target(self, 0)) {
          // dA = dC · B
          kernels::gemm_nn(m, k, n, g, self.inputs[1]->value.data(), ta->grad_buffer().data(), true);
        }
        if (auto* tb = grad_target(self, 1)) {
          // dB = dCᵀ · A
          kernels::gemm_tn(n, k, m, g, self.inputs[0]->value.data(), tb->grad_buffer().data(), true);
        }
      },
      "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op_result(
      {n, m}, std::move(out), {a},
      [m, n](detail::Node& self) {
        auto* ta = grad_target(self, 0);
        if (!ta) return;
        auto ga = ta->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
      },
      "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; }, "scale");
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor log1p(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log1p(x); }, [](double x, double) { return 1.0 / (1.0 + x); }, "log1p");
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw DimensionError("add_row_bias: bias of size " + std::to_string(bias.size()) + " for rows of width " +
                         std::to_string(n));
  }
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  return make_op_result(
      x.shape(), std::move(out), {x, bias},
      [m, n](detail::Node& self) {
        if (auto* tx = grad_target(self, 0)) {
          auto gx = tx->grad_buffer();
          for (std::size_t i = 0; i < m * n; ++i) gx[i] += self.grad[i];
        }
        if (auto* tb = grad_target(self, 1)) {
          auto gb = tb->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
        }
      },
      "add_row_bias");
}

Tensor sum(const Tensor& a) {
  const auto av = a.data();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  return make_op_result(
      {1, 1}, {total}, {a},
      [](detail::Node& self) {
        auto* ta = grad_target(self, 0);
        if (!ta) return;
        for (double& g : ta->grad_buffer()) g += self.grad[0];
      },
      "sum");
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw DimensionError("mean_rows: empty input");
  const auto xv = x.data();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  for (double& v : out) v /= static_cast<double>(n);
  return make_op_result(
      {1, d}, std::move(out), {x},
      [n, d](detail::Node& self) {
        auto* tx = grad_target(self, 0);
        if (!tx) return;
        auto gx = tx->grad_buffer();
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += self.grad[j] * inv;
      },
      "mean_rows");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  return make_op_result(
      std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
      [](detail::Node& self) {
        auto* ta = grad_target(self, 0);
        if (!ta) return;
        auto ga = ta->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
      },
      "reshape");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths, offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto pv = parts[q].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[q], widths[q], out.data() + i * total + offsets[q]);
  }
  return make_op_result(
      {m, total}, std::move(out), parts,
      [m, total, widths, offsets](detail::Node& self) {
        for (std::size_t q = 0; q < widths.size(); ++q) {
          auto* tq = grad_target(self, q);
          if (!tq) continue;
          auto gq = tq->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[q]; ++j) gq[i * widths[q] + j] += self.grad[i * total + offsets[q] + j];
        }
      },
      "concat_cols");
}

std::vector<Tensor> split_cols(const Tensor& x, std::size_t pieces) {
  require_matrix(x, "split_cols");
  if (pieces == 0 || x.cols() % pieces != 0) {
    throw DimensionError("split_cols: width " + std::to_string(x.cols()) + " not divisible by " +
                         std::to_string(pieces));
  }
  const std::size_t m = x.rows(), total = x.cols(), w = total / pieces;
  std::vector<Tensor> out;
  out.reserve(pieces);
  const auto xv = x.data();
  for (std::size_t q = 0; q < pieces; ++q) {
    std::vector<double> part(m * w);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(xv.data() + i * total + q * w, w, part.data() + i * w);
    out.push_back(make_op_result(
        {m, w}, std::move(part), {x},
        [m, w, total, q](detail::Node& self) {
          auto* tx = grad_target(self, 0);
          if (!tx) return;
          auto gx = tx->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gx[i * total + q * w + j] += self.grad[i * w + j];
        },
        "split_cols"));
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    offsets.push_back(total);
    total += p.size();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_result(
      {total / std::max<std::size_t>(n, 1), n}, std::move(out), parts,
      [offsets](detail::Node& self) {
        for (std::size_t q = 0; q < offsets.size(); ++q) {
          auto* tq = grad_target(self, q);
          if (!tq) continue;
          auto gq = tq->grad_buffer();
          for (std::size_t i = 0; i < gq.size(); ++i) gq[i] += self.grad[offsets[q] + i];
        }
      },
      "concat_rows");
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t n = x.cols();
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + end * n);
  return make_op_result(
      {end - begin, n}, std::move(out), {x},
      [begin, n](detail::Node& self) {
        auto* tx = grad_target(self, 0);
        if (!tx) return;
        auto gx = tx->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[begin * n + i] += self.grad[i];
      },
      "slice_rows");
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_matrix(table, "gather_rows");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(indices.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                           std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + indices[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_op_result(
      {indices.size(), d}, std::move(out), {table},
      [idx = std::move(idx), d](detail::Node& self) {
        auto* tt = grad_target(self, 0);
        if (!tt) return;
        auto gt = tt->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += self.grad[i * d + j];
      },
      "gather_rows");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                             const std::vector<bool>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n || mask.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(n) + " rows but " +
                         std::to_string(targets.size()) + " targets and " + std::to_string(mask.size()) +
                         " mask entries");
  }
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (targets[i] >= c) {
      throw DimensionError("softmax_cross_entropy: target " + std::to_string(targets[i]) + " out of range [0," +
                           std::to_string(c) + ")");
    }
    ++valid;
  }
  if (valid == 0) throw DimensionError("softmax_cross_entropy: every row is masked");

  const auto lv = logits.data();
  std::vector<double> probs(n * c, 0.0);  // softmax of unmasked rows, kept for backward
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double* row = lv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[targets[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
  }
  const double inv = 1.0 / static_cast<double>(valid);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::vector<bool> msk = mask;
  return make_op_result(
      {1, 1}, {total * inv}, {logits},
      [probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk), n, c, inv](detail::Node& self) {
        auto* tl = grad_target(self, 0);
        if (!tl) return;
        auto gl = tl->grad_buffer();
        const double g = self.grad[0] * inv;
        for (std::size_t i = 0; i < n; ++i) {
          if (!msk[i]) continue;
          for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += g * probs[i * c + j];
          gl[i * c + tgt[i]] -= g;
        }
      },
      "softmax_cross_entropy");
}

}  // namespace ops

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params, double step) {
  for (auto& p : params) {
    if (!p.is_leaf()) throw std::logic_error("grad_check: parameters must be leaf tensors");
    p.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = loss_fn().item();
      values[i] = saved - step;
      const double minus = loss_fn().item();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) throw NumericError("grad_check: non-finite loss");
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
      ++result.coordinates;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = pi;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace tmepsr
