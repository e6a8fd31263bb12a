#pragma once

// Dense 2-D tensors and a reverse-mode differentiation tape, restricted to the
// primitives the satellite network needs. The only broadcast is adding a
// [1, n] row to an [m, n] matrix; every other shape mismatch is an error.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace nlos::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);
  // Empty unless requires_grad.
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  void zero_grad();

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

// Handle to a node on a Tape; only meaningful together with its tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(const Tensor& t);
  Var constant(Shape shape, std::vector<double> data);
  // Differentiable leaf whose gradient is accumulated into `grad_sink` on
  // backward (sink size must equal the tensor size).
  Var leaf(const Tensor& t, std::span<double> grad_sink);
  // Leaf bound to the tensor's own gradient buffer.
  Var param(Tensor& t);
  // Value copy with no gradient path.
  Var detach(Var a);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);  // same shape, or b a [1, n] row added to each row of a
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var concat(std::span<const Var> parts, std::size_t axis);
  Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
  Var transpose(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  // Softmax along `axis` over entries whose mask byte is nonzero; masked
  // entries are exactly zero. Each reduced row needs one unmasked entry.
  Var masked_softmax(Var a, std::size_t axis, std::span<const std::uint8_t> mask);
  Var scale(Var a, double s);
  Var sum(Var a);
  Var mean(Var a);
  Var mse_loss(Var pred, Var target);
  Var l1_loss(Var pred, Var target);

  const Shape& shape(Var v) const;
  std::span<const double> value(Var v) const;
  std::span<const double> grad(Var v) const;
  double scalar(Var v) const;

  // Reverse sweep from a scalar. A second call without reset() throws.
  void backward(Var loss);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  // Smallest |input| seen by any relu since the last reset.
  double min_relu_margin() const { return min_relu_margin_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::span<double> sink;
    std::function<void(Tape&, std::uint32_t)> backward;
  };

  Var push(Shape shape, std::vector<double> value, bool needs_grad,
           std::function<void(Tape&, std::uint32_t)> backward = {});
  Node& node(Var v);
  const Node& node(Var v) const;
  std::vector<double>& grad_buffer(std::uint32_t id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  double min_relu_margin_ = 1e300;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_abs_error = 0.0;
  std::size_t elements = 0;
  std::size_t failures = 0;  // elements with rel >= tol
  double max_failing_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_param;
  bool passed = false;
};

// Parameter-to-scalar function: builds its graph on the given tape (using
// Tape::param on the tensors it reads) and returns the loss.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences per element:
/// rel = |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, std::map<std::string, Tensor*> params,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace nlos::tensor
