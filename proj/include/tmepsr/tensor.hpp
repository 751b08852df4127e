#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable value node. Parameters are leaf
// tensors created with Tensor::parameter(); their values may be updated in place
// by an optimizer between forward passes. Ops record a node on the active Tape
// only when a tape is active on the calling thread and at least one input
// requires a gradient, so evaluation code pays nothing for autodiff.
//
// Broadcasting is limited to scalar-vs-tensor (a 1-element operand).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tmepsr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf with requires_grad = true.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rows and columns of the matrix view: last axis is columns, the rest fold into rows.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Leaf tensors only; used by optimizers and initializers.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  // New constant leaf sharing no state with this tensor.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable op nodes. Constructing a Tape makes it the
// active tape of the calling thread until it is destroyed; tapes nest.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<detail::Node> node);
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and walks the tape once in reverse.
  // Leaf gradients accumulate; call zero_grad() on parameters between steps.
  void backward(const Tensor& loss);

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_;
};

// Backward on the thread's active tape.
void backward(const Tensor& loss);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]ᵀ
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log1p(const Tensor& a);

// x[m×n] + bias[n] added to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean_rows(const Tensor& x);  // [n×d] -> [1×d]
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat_cols(const std::vector<Tensor>& parts);
std::vector<Tensor> split_cols(const Tensor& x, std::size_t pieces);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);

// Mean over unmasked rows of −log softmax(logits_row)[target]. Rows are the
// matrix view of `logits`, so a [B×L×C] tensor contributes B·L rows.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                             const std::vector<bool>& mask);

}  // namespace ops

// Building block for fused ops defined outside this file: creates the result
// node, checks finiteness, and records it when any input requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward, const char* op_name);

// Central-difference gradient check. `params` must be leaves that `loss_fn`
// reads; `loss_fn` must build its graph from scratch on each call.
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           double step = 1e-5);

}  // namespace tmepsr
