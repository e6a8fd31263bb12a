#include "nlos/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "nlos/error.hpp"

namespace nlos::tensor {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using CRowMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_matrix(const char* op, const Shape& s) {
  if (s.size() != 2) throw UsageError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(s));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require_matrix("Tensor", shape_);
  if (numel(shape_) != data_.size()) {
    throw UsageError("Tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), 0.0);
  } else {
    grad_.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw UsageError("Tape: invalid variable handle");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("Tape: invalid variable handle");
  return nodes_[v.id];
}

std::vector<double>& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Tape::push(Shape shape, std::vector<double> value, bool needs_grad,
               std::function<void(Tape&, std::uint32_t)> backward) {
  if (backward_done_) throw UsageError("Tape: cannot record after backward without reset");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Shape& Tape::shape(Var v) const { return node(v).shape; }
std::span<const double> Tape::value(Var v) const { return node(v).value; }
std::span<const double> Tape::grad(Var v) const { return node(v).grad; }

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.value.size() != 1) throw UsageError("Tape::scalar: tensor " + shape_str(n.shape) + " is not a scalar");
  return n.value[0];
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
  min_relu_margin_ = 1e300;
}

Var Tape::constant(const Tensor& t) {
  return push(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), false);
}

Var Tape::constant(Shape shape, std::vector<double> data) {
  require_matrix("constant", shape);
  if (numel(shape) != data.size()) throw UsageError("constant: value count does not match " + shape_str(shape));
  return push(std::move(shape), std::move(data), false);
}

Var Tape::leaf(const Tensor& t, std::span<double> grad_sink) {
  if (grad_sink.size() != t.size()) throw UsageError("leaf: gradient sink size mismatch");
  Var v = push(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true,
               [](Tape&, std::uint32_t) {});
  nodes_[v.id].sink = grad_sink;
  return v;
}

Var Tape::param(Tensor& t) {
  if (!t.requires_grad()) t.set_requires_grad(true);
  return leaf(t, t.grad());
}

Var Tape::detach(Var a) {
  const Node& n = node(a);
  return push(n.shape, n.value, false);
}

void Tape::backward(Var loss) {
  if (backward_done_) throw UsageError("Tape::backward: called twice without reset");
  const Node& l = node(loss);
  if (l.value.size() != 1) throw UsageError("Tape::backward: loss must be scalar, got " + shape_str(l.shape));
  backward_done_ = true;
  if (!l.needs_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (!n.sink.empty()) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.sink[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var Tape::matmul(Var a, Var b) {
  const Shape sa = node(a).shape;
  const Shape sb = node(b).shape;
  require_matrix("matmul", sa);
  require_matrix("matmul", sb);
  if (sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  std::vector<double> out(m * n, 0.0);
  RowMap(out.data(), m, n).noalias() = CRowMap(node(a).value.data(), m, k) * CRowMap(node(b).value.data(), k, n);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push({m, n}, std::move(out), ng, [a, b, m, k, n](Tape& t, std::uint32_t self) {
    const CRowMap g(t.nodes_[self].grad.data(), m, n);
    if (t.nodes_[a.id].needs_grad) {
      auto& ga = t.grad_buffer(a.id);
      RowMap(ga.data(), m, k).noalias() += g * CRowMap(t.nodes_[b.id].value.data(), k, n).transpose();
    }
    if (t.nodes_[b.id].needs_grad) {
      auto& gb = t.grad_buffer(b.id);
      RowMap(gb.data(), k, n).noalias() += CRowMap(t.nodes_[a.id].value.data(), m, k).transpose() * g;
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Shape sa = node(a).shape;
  const Shape sb = node(b).shape;
  if (sa == sb) {
    std::vector<double> out(node(a).value);
    const auto& bv = node(b).value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    return push(sa, std::move(out), ng, [a, b](Tape& t, std::uint32_t self) {
      const auto& g = t.nodes_[self].grad;
      for (Var in : {a, b}) {
        if (!t.nodes_[in.id].needs_grad) continue;
        auto& gi = t.grad_buffer(in.id);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    });
  }
  require_matrix("add", sa);
  require_matrix("add", sb);
  if (sb[0] != 1 || sb[1] != sa[1]) shape_error("add", sa, sb);
  const std::size_t m = sa[0], n = sa[1];
  std::vector<double> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(sa, std::move(out), ng, [a, b, m, n](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.nodes_[b.id].needs_grad) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Shape sa = node(a).shape;
  if (sa != node(b).shape) shape_error("sub", sa, node(b).shape);
  std::vector<double> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(sa, std::move(out), ng, [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.nodes_[b.id].needs_grad) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Shape sa = node(a).shape;
  if (sa != node(b).shape) shape_error("mul", sa, node(b).shape);
  std::vector<double> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(sa, std::move(out), ng, [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) {
      auto& ga = t.grad_buffer(a.id);
      const auto& bv = t.nodes_[b.id].value;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.nodes_[b.id].needs_grad) {
      auto& gb = t.grad_buffer(b.id);
      const auto& av = t.nodes_[a.id].value;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var Tape::concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  if (axis > 1) throw UsageError("concat: axis must be 0 or 1");
  const Shape first = node(parts[0]).shape;
  require_matrix("concat", first);
  std::size_t total = 0;
  bool ng = false;
  for (Var p : parts) {
    const Shape& s = node(p).shape;
    require_matrix("concat", s);
    if (s[1 - axis] != first[1 - axis]) shape_error("concat", first, s);
    total += s[axis];
    ng = ng || node(p).needs_grad;
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const std::size_t out_cols = out_shape[1];
  std::vector<double> out(numel(out_shape));
  std::vector<Var> inputs(parts.begin(), parts.end());
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (Var p : inputs) {
    const Node& n = node(p);
    offsets.push_back(offset);
    const std::size_t r = n.shape[0], c = n.shape[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t oi = axis == 0 ? offset + i : i;
        const std::size_t oj = axis == 0 ? j : offset + j;
        out[oi * out_cols + oj] = n.value[i * c + j];
      }
    offset += n.shape[axis];
  }
  return push(std::move(out_shape), std::move(out), ng,
              [inputs = std::move(inputs), offsets = std::move(offsets), axis, out_cols](
                  Tape& t, std::uint32_t self) {
                const auto& g = t.nodes_[self].grad;
                for (std::size_t q = 0; q < inputs.size(); ++q) {
                  const Var p = inputs[q];
                  if (!t.nodes_[p.id].needs_grad) continue;
                  auto& gp = t.grad_buffer(p.id);
                  const std::size_t r = t.nodes_[p.id].shape[0], c = t.nodes_[p.id].shape[1];
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      const std::size_t oi = axis == 0 ? offsets[q] + i : i;
                      const std::size_t oj = axis == 0 ? j : offsets[q] + j;
                      gp[i * c + j] += g[oi * out_cols + oj];
                    }
                }
              });
}

Var Tape::slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape sa = node(a).shape;
  require_matrix("slice", sa);
  if (axis > 1) throw UsageError("slice: axis must be 0 or 1");
  if (begin >= end || end > sa[axis]) {
    throw UsageError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for " + shape_str(sa));
  }
  Shape out_shape = sa;
  out_shape[axis] = end - begin;
  const std::size_t in_cols = sa[1], r = out_shape[0], c = out_shape[1];
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  std::vector<double> out(r * c);
  const auto& av = node(a).value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[(r0 + i) * in_cols + c0 + j];
  return push(std::move(out_shape), std::move(out), node(a).needs_grad,
              [a, r, c, r0, c0, in_cols](Tape& t, std::uint32_t self) {
                const auto& g = t.nodes_[self].grad;
                auto& ga = t.grad_buffer(a.id);
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) ga[(r0 + i) * in_cols + c0 + j] += g[i * c + j];
              });
}

Var Tape::transpose(Var a) {
  const Shape sa = node(a).shape;
  require_matrix("transpose", sa);
  const std::size_t r = sa[0], c = sa[1];
  std::vector<double> out(r * c);
  const auto& av = node(a).value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return push({c, r}, std::move(out), node(a).needs_grad, [a, r, c](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var Tape::sigmoid(Var a) {
  std::vector<double> out(node(a).value);
  for (double& x : out) x = sigmoid_scalar(x);
  return push(node(a).shape, std::move(out), node(a).needs_grad, [a](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::tanh(Var a) {
  std::vector<double> out(node(a).value);
  for (double& x : out) x = std::tanh(x);
  return push(node(a).shape, std::move(out), node(a).needs_grad, [a](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::relu(Var a) {
  std::vector<double> out(node(a).value);
  for (double& x : out) {
    min_relu_margin_ = std::min(min_relu_margin_, std::abs(x));
    x = x > 0.0 ? x : 0.0;
  }
  return push(node(a).shape, std::move(out), node(a).needs_grad, [a](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& x = t.nodes_[a.id].value;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var Tape::masked_softmax(Var a, std::size_t axis, std::span<const std::uint8_t> mask) {
  const Shape sa = node(a).shape;
  require_matrix("masked_softmax", sa);
  if (axis > 1) throw UsageError("masked_softmax: axis must be 0 or 1");
  if (mask.size() != numel(sa)) {
    throw UsageError("masked_softmax: mask has " + std::to_string(mask.size()) +
                     " entries for tensor " + shape_str(sa));
  }
  const std::size_t r = sa[0], c = sa[1];
  // Reduction runs along `axis`: `lines` independent softmaxes of `len` entries.
  const std::size_t lines = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  auto index = [=](std::size_t line, std::size_t k) {
    return axis == 1 ? line * c + k : k * c + line;
  };
  const auto& av = node(a).value;
  std::vector<double> out(av.size(), 0.0);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  for (std::size_t l = 0; l < lines; ++l) {
    double mx = -1e300;
    bool any = false;
    for (std::size_t k = 0; k < len; ++k) {
      if (!m[index(l, k)]) continue;
      any = true;
      mx = std::max(mx, av[index(l, k)]);
    }
    if (!any) throw UsageError("masked_softmax: degenerate mask, row " + std::to_string(l) + " is fully masked");
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      if (!m[index(l, k)]) continue;
      const double e = std::exp(av[index(l, k)] - mx);
      out[index(l, k)] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[index(l, k)] /= z;
  }
  return push(sa, std::move(out), node(a).needs_grad,
              [a, lines, len, index](Tape& t, std::uint32_t self) {
                const auto& g = t.nodes_[self].grad;
                const auto& y = t.nodes_[self].value;
                auto& ga = t.grad_buffer(a.id);
                for (std::size_t l = 0; l < lines; ++l) {
                  double dot = 0.0;
                  for (std::size_t k = 0; k < len; ++k) dot += g[index(l, k)] * y[index(l, k)];
                  for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t i = index(l, k);
                    ga[i] += y[i] * (g[i] - dot);
                  }
                }
              });
}

Var Tape::scale(Var a, double s) {
  std::vector<double> out(node(a).value);
  for (double& x : out) x *= s;
  return push(node(a).shape, std::move(out), node(a).needs_grad, [a, s](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double x : node(a).value) s += x;
  return push({1, 1}, {s}, node(a).needs_grad, [a](Tape& t, std::uint32_t self) {
    const double g = t.nodes_[self].grad[0];
    auto& ga = t.grad_buffer(a.id);
    for (double& x : ga) x += g;
  });
}

Var Tape::mean(Var a) {
  const std::size_t n = node(a).value.size();
  if (n == 0) throw UsageError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::mse_loss(Var pred, Var target) {
  const Shape sp = node(pred).shape;
  if (sp != node(target).shape) shape_error("mse_loss", sp, node(target).shape);
  const auto& p = node(pred).value;
  const auto& y = node(target).value;
  const std::size_t n = p.size();
  if (n == 0) throw UsageError("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  const bool ng = node(pred).needs_grad || node(target).needs_grad;
  return push({1, 1}, {s / static_cast<double>(n)}, ng, [pred, target, n](Tape& t, std::uint32_t self) {
    const double g = t.nodes_[self].grad[0];
    const auto& p = t.nodes_[pred.id].value;
    const auto& y = t.nodes_[target.id].value;
    const double k = 2.0 * g / static_cast<double>(n);
    if (t.nodes_[pred.id].needs_grad) {
      auto& gp = t.grad_buffer(pred.id);
      for (std::size_t i = 0; i < n; ++i) gp[i] += k * (p[i] - y[i]);
    }
    if (t.nodes_[target.id].needs_grad) {
      auto& gy = t.grad_buffer(target.id);
      for (std::size_t i = 0; i < n; ++i) gy[i] -= k * (p[i] - y[i]);
    }
  });
}

Var Tape::l1_loss(Var pred, Var target) {
  const Shape sp = node(pred).shape;
  if (sp != node(target).shape) shape_error("l1_loss", sp, node(target).shape);
  const auto& p = node(pred).value;
  const auto& y = node(target).value;
  const std::size_t n = p.size();
  if (n == 0) throw UsageError("l1_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(p[i] - y[i]);
  const bool ng = node(pred).needs_grad || node(target).needs_grad;
  return push({1, 1}, {s / static_cast<double>(n)}, ng, [pred, target, n](Tape& t, std::uint32_t self) {
    const double g = t.nodes_[self].grad[0] / static_cast<double>(n);
    const auto& p = t.nodes_[pred.id].value;
    const auto& y = t.nodes_[target.id].value;
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (t.nodes_[pred.id].needs_grad) {
      auto& gp = t.grad_buffer(pred.id);
      for (std::size_t i = 0; i < n; ++i) gp[i] += g * sign(p[i] - y[i]);
    }
    if (t.nodes_[target.id].needs_grad) {
      auto& gy = t.grad_buffer(target.id);
      for (std::size_t i = 0; i < n; ++i) gy[i] -= g * sign(p[i] - y[i]);
    }
  });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const ScalarFn& f, std::map<std::string, Tensor*> params, double eps,
                           double tol) {
  for (auto& [name, t] : params) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&f]() {
    Tape tape;
    return tape.scalar(f(tape));
  };

  GradCheckReport report;
  for (auto& [name, t] : params) {
    GradCheckEntry e;
    e.name = name;
    auto data = t->data();
    e.elements = data.size();
    const auto grad = t->grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      // Divide by the representable step actually taken.
      const double hi = saved + eps;
      const double lo = saved - eps;
      data[i] = hi;
      const double up = evaluate();
      data[i] = lo;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (hi - lo);
      const double analytic = grad[i];
      const double abs_error = std::abs(analytic - numeric);
      const double rel = abs_error / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      e.max_abs_error = std::max(e.max_abs_error, abs_error);
      if (rel >= tol) {
        ++e.failures;
        e.max_failing_abs_error = std::max(e.max_failing_abs_error, abs_error);
      }
      if (rel > e.max_rel_error || i == 0) {
        e.max_rel_error = rel;
        e.worst_index = i;
        e.analytic = analytic;
        e.numeric = numeric;
      }
    }
    if (e.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = e.max_rel_error;
      report.worst_param = name;
    }
    report.entries.push_back(std::move(e));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace nlos::tensor
