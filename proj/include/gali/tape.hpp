#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gali/tensor.hpp"

namespace gali {

/// Named trainable value with a same-shape gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered registry of parameters. Names are unique; iteration order is the
/// name order, which keeps optimizer updates and checkpoints deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }

  void zero_grads();

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Append-only define-by-run graph. Every operation records its output and
/// whatever its backward rule needs; node inputs always precede the node, so
/// one reverse sweep visits each node at most once.
class Tape {
 public:
  // leaves
  Var constant(Tensor t);
  Var param(Parameter& p);

  // elementwise (same shape unless stated)
  Var add(Var a, Var b);
  Var add_row(Var a, Var bias);  // [r,c] + [c] per-row bias
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var leaky_relu(Var a, double alpha);
  Var exp(Var a);
  Var log(Var a);  // throws DomainError on non-positive entries
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);

  // linear algebra
  Var matmul(Var a, Var b);     // [r,k] x [k,c]
  Var matmul_nt(Var a, Var b);  // [r,k] x [c,k]^T -> [r,c]

  // scalar-node arithmetic (s is a [1,1] node)
  Var recip(Var s);              // 1 / s, throws DomainError at 0
  Var scale_by(Var a, Var s);    // a * s elementwise

  // rows-as-distributions
  Var softmax_rows(Var logits);
  Var log_softmax_rows(Var logits);
  Var log_one_minus_softmax_col(Var logits, int j);  // [n,1], log(1 - p_j) via logsumexp over k != j

  // structure
  Var col(Var a, int j);  // [n,1] column slice
  Var concat_cols(const std::vector<Var>& parts);

  // constant boolean selection (sel is row-major over the tensor, 1 = selected)
  Var select_fill(Var x, std::vector<std::uint8_t> sel, double fill);       // sel ? fill : x
  Var select_mix(Var x, Var r, std::vector<std::uint8_t> sel);              // sel ? r : x

  // reductions
  Var sum_all(Var a);
  Var mean_all(Var a);

  const Tensor& value(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  /// Distance of the closest recorded activation input to a derivative kink
  /// (leaky_relu at 0, clamp at its bounds). Central differences are only
  /// trustworthy when this comfortably exceeds the probe step.
  double kink_distance() const;

  /// Reverse sweep from a scalar loss; gradients of every reachable Parameter
  /// leaf are accumulated (added, never overwritten) into the ParamStore.
  void backward(Var loss);

 private:
  enum class Op {
    kConst,
    kParam,
    kAdd,
    kAddRow,
    kSub,
    kMul,
    kScale,
    kTanh,
    kLeakyRelu,
    kExp,
    kLog,
    kSquare,
    kClamp,
    kRecip,
    kScaleBy,
    kMatmul,
    kMatmulNT,
    kSoftmaxRows,
    kLogSoftmaxRows,
    kLogOneMinusSoftmaxCol,
    kCol,
    kConcatCols,
    kSelectFill,
    kSelectMix,
    kSumAll,
    kMeanAll,
  };

  struct Node {
    Op op;
    std::vector<int> in;
    Tensor out;
    Tensor saved;                   // op-specific cache (softmax probs, ...)
    Parameter* param = nullptr;     // kParam
    double a = 0.0, b = 0.0;        // scalar args (alpha, clamp bounds, scale)
    int j = 0;                      // column index
    std::vector<std::uint8_t> sel;  // select ops
  };

  int push(Node n);
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].out; }
  void check(Var v) const;

  std::deque<Node> nodes_;  // node references stay valid as the tape grows
};

/// Max over parameter entries of |analytic - central difference| /
/// (|central difference| + 1e-8). `build` must be deterministic: it is
/// replayed once per probe with perturbed parameter values.
double grad_check(ParamStore& params, const std::function<Var(Tape&)>& build, double h = 1e-5);

}  // namespace gali
