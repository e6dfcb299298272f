#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "brits/tensor.hpp"

namespace brits {

/// Learnable tensor with an accumulated gradient of identical shape.
struct Parameter {
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)),
        grad(this->value.rows(), this->value.cols()) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Ordered, name-addressable collection of parameters. Iteration order is the
/// insertion order, which keeps optimizer updates and serialization stable.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  /// Returns the index of the new parameter. Duplicate names are rejected.
  std::size_t add(const std::string& name, Tensor value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  Parameter& at(const std::string& name) { return *params_[index_of(name)]; }
  const Parameter& at(const std::string& name) const { return *params_[index_of(name)]; }

  void zero_grad();
  std::size_t total_size() const;

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

enum class Op {
  constant,
  parameter,
  matmul,
  add,
  sub,
  mul,
  scale,
  sigmoid,
  tanh,
  exp,
  negate,
  relu,
  concat,
  slice,
  sum,
  mean,
  abs,
  square,
  detach,
  softmax_cross_entropy,
};

const char* op_name(Op op);

/// Reverse-mode recorder. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted and backward is a single sweep
/// from the root down to node 0.
///
/// A tape is meant to be used for one forward/backward pass over one
/// sequence and then discarded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `param`. Recording the same parameter twice returns the
  /// same node.
  Var parameter(Parameter& param);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var negate(Var a);
  /// max(0, a); the derivative at exactly 0 is taken as 0.
  Var relu(Var a);
  /// Stacks column vectors vertically.
  Var concat(std::span<const Var> parts);
  /// Contiguous range [offset, offset + length) of a column vector.
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var sum(Var a);
  Var mean(Var a);
  Var abs(Var a);
  Var square(Var a);
  /// Same forward value, no gradient flows to the input.
  Var detach(Var a);
  /// -log softmax(logits)[label] for a column of logits.
  Var softmax_cross_entropy(Var logits, std::size_t label);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;

  /// Accumulates d(root)/d(param) into every reachable Parameter::grad.
  /// Node adjoints from the most recent sweep remain readable through grad().
  void backward(Var root);
  /// Adjoint of `v` from the most recent backward(); zeros if unreached.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    std::size_t a = 0;
    std::size_t b = 0;
    std::vector<std::size_t> inputs;  // concat only
    std::size_t offset = 0;           // slice offset / softmax label
    double factor = 0.0;              // scale factor
    Tensor value;
    Parameter* param = nullptr;
    bool live = false;  // depends on some parameter
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void check_shapes(Op op, Var a, Var b, bool ok) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<Tensor> adjoints_;
};

}  // namespace brits
