#include "brits/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace brits {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "tensor data length " << data_.size() << " does not match shape " << rows_
       << "x" << cols_;
    throw DataError(os.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::ParameterSet(const ParameterSet& other) : index_(other.index_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw DataError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw DataError("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i]->value)) {
      throw DataError("parameter snapshot shape mismatch for '" + params_[i]->name + "'");
    }
    params_[i]->value = values[i];
  }
}

// ---------------------------------------------------------------------------
// Tape

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::negate: return "negate";
    case Op::relu: return "relu";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::abs: return "abs";
    case Op::square: return "square";
    case Op::detach: return "detach";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "?";
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Tensor map(const Tensor& in, F f) {
  Tensor out(in.rows(), in.cols());
  auto src = in.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// acc += g
void accumulate(Tensor& acc, const Tensor& g) {
  auto dst = acc.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape node id out of range");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.param != nullptr ? n.param->value : n.value;
}

double Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw DataError("tape value is not a scalar: " + t.shape_string());
  return t[0];
}

Var Tape::push(Node n) {
  if (n.param == nullptr && !n.value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(n.op));
  }
  switch (n.op) {
    case Op::constant:
    case Op::detach:
      n.live = false;
      break;
    case Op::parameter:
      n.live = true;
      break;
    case Op::concat:
      n.live = std::any_of(n.inputs.begin(), n.inputs.end(),
                           [this](std::size_t in) { return nodes_[in].live; });
      break;
    case Op::matmul:
    case Op::add:
    case Op::sub:
    case Op::mul:
      n.live = nodes_[n.a].live || nodes_[n.b].live;
      break;
    default:
      n.live = nodes_[n.a].live;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Tape::check_shapes(Op op, Var a, Var b, bool ok) const {
  if (ok) return;
  std::ostringstream os;
  os << op_name(op) << ": incompatible shapes " << value(a).shape_string() << " and "
     << value(b).shape_string();
  throw DataError(os.str());
}

Var Tape::constant(Tensor value) {
  Node n{Op::constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  auto it = param_nodes_.find(&param);
  if (it != param_nodes_.end()) return Var{it->second};
  if (!param.value.all_finite()) {
    throw NumericError("parameter '" + param.name + "' holds non-finite values");
  }
  Node n{Op::parameter};
  n.param = &param;
  Var v = push(std::move(n));
  param_nodes_.emplace(&param, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_shapes(Op::matmul, a, b, A.cols() == B.rows());
  const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
  Tensor out(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data().data() + i * k;
    double* orow = out.data().data() + i * p;
    if (p == 1) {
      const double* bcol = B.data().data();
      double s[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t j = 0;
      for (; j + 4 <= k; j += 4) {
        s[0] += arow[j] * bcol[j];
        s[1] += arow[j + 1] * bcol[j + 1];
        s[2] += arow[j + 2] * bcol[j + 2];
        s[3] += arow[j + 3] * bcol[j + 3];
      }
      for (; j < k; ++j) s[0] += arow[j] * bcol[j];
      orow[0] = (s[0] + s[1]) + (s[2] + s[3]);
    } else {
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = arow[j];
        const double* brow = B.data().data() + j * p;
        for (std::size_t c = 0; c < p; ++c) orow[c] += aij * brow[c];
      }
    }
  }
  Node n{Op::matmul, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_shapes(Op::add, a, b, A.same_shape(B));
  Tensor out = A;
  accumulate(out, B);
  Node n{Op::add, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_shapes(Op::sub, a, b, A.same_shape(B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  Node n{Op::sub, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_shapes(Op::mul, a, b, A.same_shape(B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Node n{Op::mul, a.id, b.id};
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  Node n{Op::scale, a.id};
  n.factor = factor;
  n.value = map(value(a), [factor](double x) { return x * factor; });
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n{Op::sigmoid, a.id};
  n.value = map(value(a), stable_sigmoid);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n{Op::tanh, a.id};
  n.value = map(value(a), [](double x) { return std::tanh(x); });
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n{Op::exp, a.id};
  n.value = map(value(a), [](double x) { return std::exp(x); });
  return push(std::move(n));
}

Var Tape::negate(Var a) {
  Node n{Op::negate, a.id};
  n.value = map(value(a), [](double x) { return -x; });
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n{Op::relu, a.id};
  n.value = map(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DataError("concat: no inputs");
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (!t.is_column()) throw DataError("concat: input is not a column vector: " + t.shape_string());
    total += t.rows();
  }
  Tensor out(total, 1);
  Node n{Op::concat};
  std::size_t at = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += t.rows();
    n.inputs.push_back(p.id);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& A = value(a);
  if (!A.is_column() || offset + length > A.rows()) {
    std::ostringstream os;
    os << "slice: range [" << offset << ", " << offset + length << ") invalid for shape "
       << A.shape_string();
    throw DataError(os.str());
  }
  Tensor out(length, 1);
  std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(offset), length, out.data().begin());
  Node n{Op::slice, a.id};
  n.offset = offset;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double x : value(a).data()) s += x;
  Node n{Op::sum, a.id};
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Tensor& A = value(a);
  if (A.empty()) throw DataError("mean: empty input");
  double s = 0.0;
  for (double x : A.data()) s += x;
  Node n{Op::mean, a.id};
  n.value = Tensor::scalar(s / static_cast<double>(A.size()));
  return push(std::move(n));
}

Var Tape::abs(Var a) {
  Node n{Op::abs, a.id};
  n.value = map(value(a), [](double x) { return std::fabs(x); });
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n{Op::square, a.id};
  n.value = map(value(a), [](double x) { return x * x; });
  return push(std::move(n));
}

Var Tape::detach(Var a) {
  Node n{Op::detach, a.id};
  n.value = value(a);
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = value(logits);
  if (!z.is_column() || label >= z.rows()) {
    throw DataError("softmax_cross_entropy: label " + std::to_string(label) +
                    " out of range for logits " + z.shape_string());
  }
  double zmax = z[0];
  for (double v : z.data()) zmax = std::max(zmax, v);
  double s = 0.0;
  for (double v : z.data()) s += std::exp(v - zmax);
  Node n{Op::softmax_cross_entropy, logits.id};
  n.offset = label;
  n.value = Tensor::scalar(zmax + std::log(s) - z[label]);
  return push(std::move(n));
}

Tensor Tape::grad(Var v) const {
  if (v.id < adjoints_.size() && !adjoints_[v.id].empty()) return adjoints_[v.id];
  const Tensor& t = value(v);
  return Tensor(t.rows(), t.cols());
}

void Tape::backward(Var root) {
  const Tensor& r = value(root);
  if (r.size() != 1) throw DataError("backward: root must be a scalar, got " + r.shape_string());

  adjoints_.assign(nodes_.size(), Tensor{});
  adjoints_[root.id] = Tensor::scalar(1.0);

  // Adds `g` into the adjoint of node `id`, allocating on first touch.
  auto flow = [this](std::size_t id) -> Tensor& {
    Tensor& slot = adjoints_[id];
    if (slot.empty()) {
      const Tensor& v = value(Var{id});
      slot = Tensor(v.rows(), v.cols());
    }
    return slot;
  };

  auto live = [this](std::size_t id) { return nodes_[id].live; };

  for (std::size_t id = root.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (adjoints_[id].empty() || !n.live) continue;
    // adjoints_ is never resized during the sweep, so this stays valid.
    const Tensor& g = adjoints_[id];
    const Tensor& out = n.value;

    switch (n.op) {
      case Op::constant:
      case Op::detach:
        break;
      case Op::parameter:
        accumulate(n.param->grad, g);
        break;
      case Op::matmul: {
        const Tensor& A = value(Var{n.a});
        const Tensor& B = value(Var{n.b});
        const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
        const double* gd = g.data().data();
        const double* ad = A.data().data();
        const double* bd = B.data().data();
        if (p == 1) {
          if (live(n.a)) {
            double* ga = flow(n.a).data().data();
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = gd[i];
              for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += gi * bd[j];
            }
          }
          if (live(n.b)) {
            double* gb = flow(n.b).data().data();
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = gd[i];
              for (std::size_t j = 0; j < k; ++j) gb[j] += ad[i * k + j] * gi;
            }
          }
          break;
        }
        // gA += g * B^T
        if (live(n.a)) {
          double* ga = flow(n.a).data().data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < p; ++c) s += gd[i * p + c] * bd[j * p + c];
              ga[i * k + j] += s;
            }
          }
        }
        // gB += A^T * g
        if (live(n.b)) {
          double* gb = flow(n.b).data().data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              const double aij = ad[i * k + j];
              for (std::size_t c = 0; c < p; ++c) gb[j * p + c] += aij * gd[i * p + c];
            }
          }
        }
        break;
      }
      case Op::add:
        if (live(n.a)) accumulate(flow(n.a), g);
        if (live(n.b)) accumulate(flow(n.b), g);
        break;
      case Op::sub:
        if (live(n.a)) accumulate(flow(n.a), g);
        if (live(n.b)) {
          Tensor& gb = flow(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
        }
        break;
      case Op::mul: {
        const Tensor& A = value(Var{n.a});
        const Tensor& B = value(Var{n.b});
        if (live(n.a)) {
          Tensor& ga = flow(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * B[i];
        }
        if (live(n.b)) {
          Tensor& gb = flow(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::scale: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * n.factor;
        break;
      }
      case Op::sigmoid: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
        break;
      }
      case Op::tanh: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (1.0 - out[i] * out[i]);
        break;
      }
      case Op::exp: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * out[i];
        break;
      }
      case Op::negate: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= g[i];
        break;
      }
      case Op::relu: {
        const Tensor& A = value(Var{n.a});
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          if (A[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::concat: {
        std::size_t at = 0;
        for (std::size_t in : n.inputs) {
          const std::size_t len = value(Var{in}).size();
          if (live(in)) {
            Tensor& gi = flow(in);
            for (std::size_t i = 0; i < len; ++i) gi[i] += g[at + i];
          }
          at += len;
        }
        break;
      }
      case Op::slice: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[n.offset + i] += g[i];
        break;
      }
      case Op::sum: {
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::mean: {
        Tensor& ga = flow(n.a);
        const double w = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += w;
        break;
      }
      case Op::abs: {
        const Tensor& A = value(Var{n.a});
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          if (A[i] > 0.0) ga[i] += g[i];
          else if (A[i] < 0.0) ga[i] -= g[i];
        }
        break;
      }
      case Op::square: {
        const Tensor& A = value(Var{n.a});
        Tensor& ga = flow(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * A[i] * g[i];
        break;
      }
      case Op::softmax_cross_entropy: {
        const Tensor& z = value(Var{n.a});
        double zmax = z[0];
        for (double v : z.data()) zmax = std::max(zmax, v);
        double s = 0.0;
        for (double v : z.data()) s += std::exp(v - zmax);
        Tensor& gz = flow(n.a);
        for (std::size_t i = 0; i < gz.size(); ++i) {
          const double p = std::exp(z[i] - zmax) / s;
          gz[i] += g[0] * (p - (i == n.offset ? 1.0 : 0.0));
        }
        break;
      }
    }
  }
}

}  // namespace brits
