#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "medcore/tensor.hpp"

namespace medcore {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& dims() const { return value().dims(); }
};

/// Accumulates gradient contributions into per-node buffers during backward.
class GradAccumulator {
 public:
  GradAccumulator(const Tape& tape, std::vector<Tensor>& grads) : tape_(tape), grads_(grads) {}

  /// Zero-initialized gradient buffer for node `id`, shaped like its value.
  Tensor& slot(std::size_t id);
  bool wants(std::size_t id) const;

 private:
  const Tape& tape_;
  std::vector<Tensor>& grads_;
};

using BackwardFn = std::function<void(const Tape&, const Tensor& grad_out, GradAccumulator&)>;

class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<Tensor> grads);

  /// Gradient with respect to `v`; zeros when `v` was not reached from the loss.
  Tensor wrt(Var v) const;
  /// Gradients of every named parameter leaf on the tape, keyed by name.
  std::map<std::string, Tensor> parameters() const;

 private:
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

/// Linear record of operations. Single-owner; not shared between threads.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf whose gradient is reported by name from backward().
  Var parameter(std::string name, Tensor value);

  /// Records an op result. `fn` is dropped when no parent requires a gradient.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Gradients backward(Var loss) const;

 private:
  friend class Gradients;
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Var a, Var b);
/// Elementwise binary ops. The smaller operand may be a scalar or have dims
/// equal to a trailing suffix of the larger operand's dims.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var broadcast_to(Var a, const Shape& dims);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var transpose(Var a);
Var reshape(Var a, const Shape& dims);
Var slice(Var a, int axis, std::int64_t begin, std::int64_t count);
Var concat(const std::vector<Var>& parts, int axis);

Var softmax_last(Var a);
Var layernorm_last(Var a, double eps = 1e-5);
Var gelu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);

/// Per-element binary cross-entropy between logits and a constant 0/1 target.
Var bce_with_logits(Var logits, const Tensor& target);
/// 4-neighbour Laplacian on an H x W map with replicate padding.
Var laplacian4(Var a);

/// H x W x C feature maps upsampled by an integer factor.
Var upsample_nearest(Var a, std::int64_t factor);
Var upsample_bilinear(Var a, std::int64_t factor);
/// C x H x W image to (H/p * W/p) x (C*p*p) patch rows.
Var patch_fold(Var image, std::int64_t patch);

}  // namespace ops

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace medcore
