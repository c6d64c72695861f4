#include "medcore/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "medcore/error.hpp"

namespace medcore {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat as_matrix(const Tensor& t) { return ConstMapMat(t.data().data(), t.dim(0), t.dim(1)); }
MapMat as_matrix(Tensor& t) { return MapMat(t.data().data(), t.dim(0), t.dim(1)); }

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ArgumentError("op applied to an unbound Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ArgumentError("op operands live on different tapes");
  return tape_of(a);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinOp { add, sub, mul, div };

const char* bin_name(BinOp op) {
  switch (op) {
    case BinOp::add: return "add";
    case BinOp::sub: return "sub";
    case BinOp::mul: return "mul";
    case BinOp::div: return "div";
  }
  return "?";
}

Var binary(BinOp op, Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_big = av.size() >= bv.size();
  const Tensor& big = a_big ? av : bv;
  const Tensor& small = a_big ? bv : av;
  if (small.size() != 1 && !is_suffix(small.dims(), big.dims())) {
    throw ShapeError(std::string(bin_name(op)) + ": shape mismatch " + shape_string(av.dims()) + " vs " +
                     shape_string(bv.dims()));
  }
  const std::size_t n = big.size();
  const std::size_t na = av.size();
  const std::size_t nb = bv.size();
  Tensor out(big.dims());
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i % na];
    const double y = bv[i % nb];
    switch (op) {
      case BinOp::add: out[i] = x + y; break;
      case BinOp::sub: out[i] = x - y; break;
      case BinOp::mul: out[i] = x * y; break;
      case BinOp::div: out[i] = x / y; break;
    }
  }
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return tape.record(bin_name(op), std::move(out), {ia, ib},
                     [op, ia, ib, n, na, nb](const Tape& t, const Tensor& g, GradAccumulator& acc) {
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(ib);
                       if (acc.wants(ia)) {
                         Tensor& ga = acc.slot(ia);
                         for (std::size_t i = 0; i < n; ++i) {
                           double d = g[i];
                           if (op == BinOp::mul) d *= y[i % nb];
                           if (op == BinOp::div) d /= y[i % nb];
                           ga[i % na] += d;
                         }
                       }
                       if (acc.wants(ib)) {
                         Tensor& gb = acc.slot(ib);
                         for (std::size_t i = 0; i < n; ++i) {
                           double d = g[i];
                           switch (op) {
                             case BinOp::add: break;
                             case BinOp::sub: d = -d; break;
                             case BinOp::mul: d *= x[i % na]; break;
                             case BinOp::div: {
                               const double yy = y[i % nb];
                               d *= -x[i % na] / (yy * yy);
                               break;
                             }
                           }
                           gb[i % nb] += d;
                         }
                       }
                     });
}

template <class F, class DF>
Var unary(const char* name, Var a, F f, DF df) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id;
  const std::size_t io = tape.size();
  return tape.record(name, std::move(out), {ia}, [ia, io, df](const Tape& t, const Tensor& g, GradAccumulator& acc) {
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(io);
    Tensor& ga = acc.slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

// Source coordinate and weights for half-pixel-centred linear upsampling along one axis.
struct LinearTap {
  std::int64_t i0, i1;
  double w0, w1;
};

std::vector<LinearTap> linear_taps(std::int64_t in, std::int64_t factor) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(in * factor));
  for (std::int64_t o = 0; o < in * factor; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    std::int64_t i1 = std::min(i0 + 1, in - 1);
    double f = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------------------

const Tensor& Var::value() const {
  if (tape == nullptr) throw ArgumentError("value() of an unbound Var");
  return tape->value(id);
}

Tensor& GradAccumulator::slot(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(tape_.value(id).dims());
  return g;
}

bool GradAccumulator::wants(std::size_t id) const { return tape_.requires_grad(id); }

Gradients::Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}

Tensor Gradients::wrt(Var v) const {
  if (tape_ == nullptr || v.tape != tape_) throw ArgumentError("Gradients::wrt: Var from a different tape");
  if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
  return Tensor(tape_->value(v.id).dims());
}

std::map<std::string, Tensor> Gradients::parameters() const {
  std::map<std::string, Tensor> out;
  if (tape_ == nullptr) return out;
  for (std::size_t i = 0; i < tape_->nodes_.size(); ++i) {
    const auto& node = tape_->nodes_[i];
    if (node.param_name.empty()) continue;
    if (i < grads_.size() && !grads_[i].empty()) {
      out[node.param_name] = grads_[i];
    } else {
      out[node.param_name] = Tensor(node.value.dims());
    }
  }
  return out;
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input of shape " + shape_string(value.dims()));
  nodes_.push_back(Node{std::move(value), {}, {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(std::string name, Tensor value) {
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' holds non-finite values");
  nodes_.push_back(Node{std::move(value), {}, {}, grad_enabled_, std::move(name)});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": produced non-finite values (shape " + shape_string(value.dims()) + ")");
  }
  bool needs = false;
  if (grad_enabled_) {
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) {
    node.parents = std::move(parents);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape != this) throw ArgumentError("backward: loss recorded on another tape");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + shape_string(lv.dims()));
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor::full(lv.dims(), 1.0);
  GradAccumulator acc(*this, grads);
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!node.backward || grads[k].empty()) continue;
    node.backward(*this, grads[k], acc);
  }
  return Gradients(this, std::move(grads));
}

// ---------------------------------------------------------------------------

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_derivative(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

namespace ops {

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av.dims()) + " x " + shape_string(bv.dims()));
  }
  Tensor out(Shape{av.dim(0), bv.dim(1)});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return tape.record("matmul", std::move(out), {ia, ib}, [ia, ib](const Tape& t, const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) as_matrix(acc.slot(ia)).noalias() += as_matrix(g) * as_matrix(t.value(ib)).transpose();
    if (acc.wants(ib)) as_matrix(acc.slot(ib)).noalias() += as_matrix(t.value(ia)).transpose() * as_matrix(g);
  });
}

Var add(Var a, Var b) { return binary(BinOp::add, a, b); }
Var sub(Var a, Var b) { return binary(BinOp::sub, a, b); }
Var mul(Var a, Var b) { return binary(BinOp::mul, a, b); }
Var div(Var a, Var b) { return binary(BinOp::div, a, b); }

Var broadcast_to(Var a, const Shape& dims) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.size() != 1 && !is_suffix(x.dims(), dims)) {
    throw ShapeError("broadcast_to: cannot broadcast " + shape_string(x.dims()) + " to " + shape_string(dims));
  }
  Tensor out(dims);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i % n];
  const std::size_t ia = a.id;
  return tape.record("broadcast", std::move(out), {ia}, [ia, n](const Tape&, const Tensor& g, GradAccumulator& acc) {
    Tensor& ga = acc.slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i % n] += g[i];
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(x.dims()));
  Tensor out(Shape{x.dim(1), x.dim(0)});
  as_matrix(out) = as_matrix(x).transpose();
  const std::size_t ia = a.id;
  return tape.record("transpose", std::move(out), {ia}, [ia](const Tape&, const Tensor& g, GradAccumulator& acc) {
    as_matrix(acc.slot(ia)) += as_matrix(g).transpose();
  });
}

Var reshape(Var a, const Shape& dims) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (shape_numel(dims) != static_cast<std::int64_t>(x.size())) {
    throw ShapeError("reshape: cannot view " + shape_string(x.dims()) + " as " + shape_string(dims));
  }
  const std::size_t ia = a.id;
  return tape.record("reshape", x.reshaped(dims), {ia}, [ia](const Tape&, const Tensor& g, GradAccumulator& acc) {
    Tensor& ga = acc.slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var slice(Var a, int axis, std::int64_t begin, std::int64_t count) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank() || begin < 0 || count <= 0 || begin + count > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") on axis " + std::to_string(axis) + " invalid for shape " + shape_string(x.dims()));
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t len = x.dim(axis);
  Shape od = x.dims();
  od[static_cast<std::size_t>(axis)] = count;
  Tensor out(od);
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = x.data().data() + (o * len + begin) * inner;
    std::copy(src, src + count * inner, out.data().data() + o * count * inner);
  }
  const std::size_t ia = a.id;
  return tape.record("slice", std::move(out), {ia},
                     [ia, outer, inner, len, begin, count](const Tape&, const Tensor& g, GradAccumulator& acc) {
                       Tensor& ga = acc.slot(ia);
                       for (std::int64_t o = 0; o < outer; ++o) {
                         double* dst = ga.data().data() + (o * len + begin) * inner;
                         const double* src = g.data().data() + o * count * inner;
                         for (std::int64_t i = 0; i < count * inner; ++i) dst[i] += src[i];
                       }
                     });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = tape_of(parts.front());
  const Tensor& first = parts.front().value();
  if (axis < 0) axis += first.rank();
  if (axis < 0 || axis >= first.rank()) throw ShapeError("concat: bad axis for shape " + shape_string(first.dims()));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  for (int i = axis + 1; i < first.rank(); ++i) inner *= first.dim(i);
  std::vector<std::int64_t> lens;
  std::vector<std::size_t> ids;
  std::int64_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != &tape) throw ArgumentError("concat: operands live on different tapes");
    const Tensor& v = p.value();
    Shape expect = first.dims();
    expect[static_cast<std::size_t>(axis)] = v.rank() == first.rank() ? v.dim(axis) : -1;
    if (v.dims() != expect) {
      throw ShapeError("concat: shape mismatch " + shape_string(first.dims()) + " vs " + shape_string(v.dims()));
    }
    lens.push_back(v.dim(axis));
    ids.push_back(p.id);
    total += v.dim(axis);
  }
  Shape od = first.dims();
  od[static_cast<std::size_t>(axis)] = total;
  Tensor out(od);
  std::int64_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = v.data().data() + o * lens[k] * inner;
      std::copy(src, src + lens[k] * inner, out.data().data() + (o * total + off) * inner);
    }
    off += lens[k];
  }
  return tape.record("concat", std::move(out), ids,
                     [ids, lens, outer, inner, total](const Tape&, const Tensor& g, GradAccumulator& acc) {
                       std::int64_t offset = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (acc.wants(ids[k])) {
                           Tensor& gk = acc.slot(ids[k]);
                           for (std::int64_t o = 0; o < outer; ++o) {
                             const double* src = g.data().data() + (o * total + offset) * inner;
                             double* dst = gk.data().data() + o * lens[k] * inner;
                             for (std::int64_t i = 0; i < lens[k] * inner; ++i) dst[i] += src[i];
                           }
                         }
                         offset += lens[k];
                       }
                     });
}

Var softmax_last(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() < 1) throw ShapeError("softmax: rank-0 input");
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = static_cast<std::int64_t>(x.size()) / n;
  Tensor out(x.dims());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x.data().data() + r * n;
    double* dst = out.data().data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += (dst[i] = std::exp(src[i] - mx));
    for (std::int64_t i = 0; i < n; ++i) dst[i] /= s;
  }
  const std::size_t ia = a.id;
  const std::size_t io = tape.size();
  return tape.record("softmax", std::move(out), {ia}, [ia, io, n, rows](const Tape& t, const Tensor& g, GradAccumulator& acc) {
    const Tensor& y = t.value(io);
    Tensor& ga = acc.slot(ia);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data().data() + r * n;
      const double* gr = g.data().data() + r * n;
      double dot = 0.0;
      for (std::int64_t i = 0; i < n; ++i) dot += yr[i] * gr[i];
      double* dst = ga.data().data() + r * n;
      for (std::int64_t i = 0; i < n; ++i) dst[i] += yr[i] * (gr[i] - dot);
    }
  });
}

Var layernorm_last(Var a, double eps) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() < 1) throw ShapeError("layernorm: rank-0 input");
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = static_cast<std::int64_t>(x.size()) / n;
  Tensor out(x.dims());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x.data().data() + r * n;
    double mu = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    double* dst = out.data().data() + r * n;
    for (std::int64_t i = 0; i < n; ++i) dst[i] = (src[i] - mu) * is;
  }
  const std::size_t ia = a.id;
  const std::size_t io = tape.size();
  return tape.record("layernorm", std::move(out), {ia},
                     [ia, io, n, rows, inv_std = std::move(inv_std)](const Tape& t, const Tensor& g, GradAccumulator& acc) {
                       const Tensor& y = t.value(io);
                       Tensor& ga = acc.slot(ia);
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const double* yr = y.data().data() + r * n;
                         const double* gr = g.data().data() + r * n;
                         double gm = 0.0, gy = 0.0;
                         for (std::int64_t i = 0; i < n; ++i) {
                           gm += gr[i];
                           gy += gr[i] * yr[i];
                         }
                         gm *= inv_n;
                         gy *= inv_n;
                         const double is = inv_std[static_cast<std::size_t>(r)];
                         double* dst = ga.data().data() + r * n;
                         for (std::int64_t i = 0; i < n; ++i) dst[i] += is * (gr[i] - gm - yr[i] * gy);
                       }
                     });
}

Var gelu(Var a) {
  return unary("gelu", a, gelu_value, [](double x, double) { return gelu_derivative(x); });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  // Neumaier summation: losses are sums of many O(1) terms and finite-difference checks see the rounding.
  double s = 0.0, c = 0.0;
  for (double v : x.data()) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  s += c;
  const std::size_t ia = a.id;
  return tape.record("sum", Tensor::scalar(s), {ia}, [ia](const Tape&, const Tensor& g, GradAccumulator& acc) {
    Tensor& ga = acc.slot(ia);
    const double gv = g[0];
    for (auto& v : ga.data()) v += gv;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var bce_with_logits(Var logits, const Tensor& target) {
  Tape& tape = tape_of(logits);
  const Tensor& z = logits.value();
  if (z.dims() != target.dims()) {
    throw ShapeError("bce_with_logits: shape mismatch " + shape_string(z.dims()) + " vs " +
                     shape_string(target.dims()));
  }
  Tensor out(z.dims());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = z[i];
    out[i] = std::max(v, 0.0) - v * target[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const std::size_t ia = logits.id;
  return tape.record("bce_with_logits", std::move(out), {ia},
                     [ia, target](const Tape& t, const Tensor& g, GradAccumulator& acc) {
                       const Tensor& zv = t.value(ia);
                       Tensor& ga = acc.slot(ia);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (sigmoid_value(zv[i]) - target[i]);
                     });
}

Var laplacian4(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2) throw ShapeError("laplacian4: expected H x W map, got " + shape_string(x.dims()));
  const std::int64_t h = x.dim(0), w = x.dim(1);
  auto apply = [h, w](const Tensor& in, Tensor& out, bool adjoint) {
    // L = sum over clamped neighbours n of (x_n - x_u); the adjoint scatters the same stencil.
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const std::int64_t u = y * w + xx;
        const std::int64_t nb[4] = {std::max<std::int64_t>(y - 1, 0) * w + xx, std::min(y + 1, h - 1) * w + xx,
                                    y * w + std::max<std::int64_t>(xx - 1, 0), y * w + std::min(xx + 1, w - 1)};
        for (std::int64_t n : nb) {
          if (!adjoint) {
            out[static_cast<std::size_t>(u)] += in[static_cast<std::size_t>(n)] - in[static_cast<std::size_t>(u)];
          } else {
            out[static_cast<std::size_t>(n)] += in[static_cast<std::size_t>(u)];
            out[static_cast<std::size_t>(u)] -= in[static_cast<std::size_t>(u)];
          }
        }
      }
    }
  };
  Tensor out(x.dims());
  apply(x, out, false);
  const std::size_t ia = a.id;
  return tape.record("laplacian4", std::move(out), {ia}, [ia, apply](const Tape&, const Tensor& g, GradAccumulator& acc) {
    apply(g, acc.slot(ia), true);
  });
}

Var upsample_nearest(Var a, std::int64_t factor) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 3 || factor < 1) {
    throw ShapeError("upsample_nearest: expected H x W x C input, got " + shape_string(x.dims()));
  }
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::int64_t oh = h * factor, ow = w * factor;
  Tensor out(Shape{oh, ow, c});
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t xx = 0; xx < ow; ++xx)
      for (std::int64_t k = 0; k < c; ++k)
        out[static_cast<std::size_t>((y * ow + xx) * c + k)] =
            x[static_cast<std::size_t>(((y / factor) * w + xx / factor) * c + k)];
  const std::size_t ia = a.id;
  return tape.record("upsample_nearest", std::move(out), {ia},
                     [ia, factor, w, c, oh, ow](const Tape&, const Tensor& g, GradAccumulator& acc) {
                       Tensor& ga = acc.slot(ia);
                       for (std::int64_t y = 0; y < oh; ++y)
                         for (std::int64_t xx = 0; xx < ow; ++xx)
                           for (std::int64_t k = 0; k < c; ++k)
                             ga[static_cast<std::size_t>(((y / factor) * w + xx / factor) * c + k)] +=
                                 g[static_cast<std::size_t>((y * ow + xx) * c + k)];
                     });
}

Var upsample_bilinear(Var a, std::int64_t factor) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 3 || factor < 1) {
    throw ShapeError("upsample_bilinear: expected H x W x C input, got " + shape_string(x.dims()));
  }
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::int64_t oh = h * factor, ow = w * factor;
  auto ty = linear_taps(h, factor);
  auto tx = linear_taps(w, factor);
  Tensor out(Shape{oh, ow, c});
  for (std::int64_t y = 0; y < oh; ++y) {
    const LinearTap& vy = ty[static_cast<std::size_t>(y)];
    for (std::int64_t xx = 0; xx < ow; ++xx) {
      const LinearTap& vx = tx[static_cast<std::size_t>(xx)];
      const double* p00 = x.data().data() + (vy.i0 * w + vx.i0) * c;
      const double* p01 = x.data().data() + (vy.i0 * w + vx.i1) * c;
      const double* p10 = x.data().data() + (vy.i1 * w + vx.i0) * c;
      const double* p11 = x.data().data() + (vy.i1 * w + vx.i1) * c;
      double* dst = out.data().data() + (y * ow + xx) * c;
      for (std::int64_t k = 0; k < c; ++k) {
        dst[k] = vy.w0 * (vx.w0 * p00[k] + vx.w1 * p01[k]) + vy.w1 * (vx.w0 * p10[k] + vx.w1 * p11[k]);
      }
    }
  }
  const std::size_t ia = a.id;
  return tape.record("upsample_bilinear", std::move(out), {ia},
                     [ia, w, c, oh, ow, ty = std::move(ty), tx = std::move(tx)](const Tape&, const Tensor& g,
                                                                                 GradAccumulator& acc) {
                       Tensor& ga = acc.slot(ia);
                       double* base = ga.data().data();
                       for (std::int64_t y = 0; y < oh; ++y) {
                         const LinearTap& vy = ty[static_cast<std::size_t>(y)];
                         for (std::int64_t xx = 0; xx < ow; ++xx) {
                           const LinearTap& vx = tx[static_cast<std::size_t>(xx)];
                           const double* src = g.data().data() + (y * ow + xx) * c;
                           double* p00 = base + (vy.i0 * w + vx.i0) * c;
                           double* p01 = base + (vy.i0 * w + vx.i1) * c;
                           double* p10 = base + (vy.i1 * w + vx.i0) * c;
                           double* p11 = base + (vy.i1 * w + vx.i1) * c;
                           for (std::int64_t k = 0; k < c; ++k) {
                             p00[k] += vy.w0 * vx.w0 * src[k];
                             p01[k] += vy.w0 * vx.w1 * src[k];
                             p10[k] += vy.w1 * vx.w0 * src[k];
                             p11[k] += vy.w1 * vx.w1 * src[k];
                           }
                         }
                       }
                     });
}

Var patch_fold(Var image, std::int64_t patch) {
  Tape& tape = tape_of(image);
  const Tensor& x = image.value();
  if (x.rank() != 3 || patch < 1 || x.dim(1) % patch != 0 || x.dim(2) % patch != 0) {
    throw ShapeError("patch_fold: image of shape " + shape_string(x.dims()) + " not divisible into " +
                     std::to_string(patch) + "-pixel patches");
  }
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t gh = h / patch, gw = w / patch;
  const std::int64_t cols = c * patch * patch;
  // Gather index for every output element; backward scatters through the same map.
  std::vector<std::size_t> index(static_cast<std::size_t>(gh * gw * cols));
  for (std::int64_t py = 0; py < gh; ++py)
    for (std::int64_t px = 0; px < gw; ++px)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t dy = 0; dy < patch; ++dy)
          for (std::int64_t dx = 0; dx < patch; ++dx) {
            const std::int64_t row = py * gw + px;
            const std::int64_t col = (ch * patch + dy) * patch + dx;
            index[static_cast<std::size_t>(row * cols + col)] =
                static_cast<std::size_t>((ch * h + py * patch + dy) * w + px * patch + dx);
          }
  Tensor out(Shape{gh * gw, cols});
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = x[index[i]];
  const std::size_t ia = image.id;
  return tape.record("patch_fold", std::move(out), {ia},
                     [ia, index = std::move(index)](const Tape&, const Tensor& g, GradAccumulator& acc) {
                       Tensor& ga = acc.slot(ia);
                       for (std::size_t i = 0; i < index.size(); ++i) ga[index[i]] += g[i];
                     });
}

}  // namespace ops
}  // namespace medcore
