#include "gali/tape.hpp"

#include <cmath>

namespace gali {

namespace {

// out += a @ b, a:[r,k] b:[k,c]
void mm_nn_acc(const double* a, const double* b, double* out, int r, int k, int c) {
  for (int i = 0; i < r; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* oi = out + static_cast<std::size_t>(i) * c;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + static_cast<std::size_t>(kk) * c;
      for (int j = 0; j < c; ++j) oi[j] += av * bk[j];
    }
  }
}

// out += a^T @ b, a:[k,r] b:[k,c]
void mm_tn_acc(const double* a, const double* b, double* out, int k, int r, int c) {
  for (int kk = 0; kk < k; ++kk) {
    const double* ak = a + static_cast<std::size_t>(kk) * r;
    const double* bk = b + static_cast<std::size_t>(kk) * c;
    for (int i = 0; i < r; ++i) {
      const double av = ak[i];
      double* oi = out + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) oi[j] += av * bk[j];
    }
  }
}

// out += a @ b^T, a:[r,k] b:[c,k]; routed through a transpose so the inner
// loops stay contiguous.
void mm_nt_acc(const double* a, const double* b, double* out, int r, int k, int c) {
  std::vector<double> bt(static_cast<std::size_t>(k) * c);
  for (int j = 0; j < c; ++j)
    for (int kk = 0; kk < k; ++kk)
      bt[static_cast<std::size_t>(kk) * c + j] = b[static_cast<std::size_t>(j) * k + kk];
  mm_nn_acc(a, bt.data(), out, r, k, c);
}

void acc(Tensor& g, const Tensor& delta) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(init.shape());
  p.value = std::move(init);
  auto [it, ok] = params_.emplace(name, std::move(p));
  (void)ok;
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) > 0; }

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) {
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = 0.0;
  }
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Var does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].out;
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::kConst;
  n.out = std::move(t);
  return {push(std::move(n))};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = Op::kParam;
  n.out = p.value;
  n.param = &p;
  return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "add");
  Node n;
  n.op = Op::kAdd;
  n.in = {a.id, b.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] += val(b.id)[i];
  return {push(std::move(n))};
}

Var Tape::add_row(Var a, Var bias) {
  check(a);
  check(bias);
  const Tensor& x = val(a.id);
  const Tensor& v = val(bias.id);
  const int c = x.cols();
  if (static_cast<int>(v.size()) != c)
    throw ShapeError("add_row: bias length " + std::to_string(v.size()) + " vs cols " +
                     std::to_string(c));
  Node n;
  n.op = Op::kAddRow;
  n.in = {a.id, bias.id};
  n.out = x;
  for (int r = 0; r < x.rows(); ++r)
    for (int j = 0; j < c; ++j) n.out.at(r, j) += v[static_cast<std::size_t>(j)];
  return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "sub");
  Node n;
  n.op = Op::kSub;
  n.in = {a.id, b.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] -= val(b.id)[i];
  return {push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "mul");
  Node n;
  n.op = Op::kMul;
  n.in = {a.id, b.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] *= val(b.id)[i];
  return {push(std::move(n))};
}

Var Tape::scale(Var a, double c) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.in = {a.id};
  n.a = c;
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] *= c;
  return {push(std::move(n))};
}

Var Tape::tanh(Var a) {
  check(a);
  Node n;
  n.op = Op::kTanh;
  n.in = {a.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = std::tanh(n.out[i]);
  return {push(std::move(n))};
}

Var Tape::leaky_relu(Var a, double alpha) {
  check(a);
  Node n;
  n.op = Op::kLeakyRelu;
  n.in = {a.id};
  n.a = alpha;
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i)
    if (n.out[i] < 0.0) n.out[i] *= alpha;
  return {push(std::move(n))};
}

Var Tape::exp(Var a) {
  check(a);
  Node n;
  n.op = Op::kExp;
  n.in = {a.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] = std::exp(n.out[i]);
  return {push(std::move(n))};
}

Var Tape::log(Var a) {
  check(a);
  Node n;
  n.op = Op::kLog;
  n.in = {a.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) {
    if (n.out[i] <= 0.0) throw DomainError("log of non-positive value");
    n.out[i] = std::log(n.out[i]);
  }
  return {push(std::move(n))};
}

Var Tape::square(Var a) {
  check(a);
  Node n;
  n.op = Op::kSquare;
  n.in = {a.id};
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] *= n.out[i];
  return {push(std::move(n))};
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(a);
  Node n;
  n.op = Op::kClamp;
  n.in = {a.id};
  n.a = lo;
  n.b = hi;
  n.out = val(a.id);
  for (std::size_t i = 0; i < n.out.size(); ++i) {
    const double v = n.out[i];
    // comparisons written so NaN passes through instead of becoming a bound
    n.out[i] = v < lo ? lo : (v > hi ? hi : v);
  }
  return {push(std::move(n))};
}

Var Tape::recip(Var s) {
  check(s);
  if (val(s.id).size() != 1) throw ShapeError("recip: scalar node required");
  const double v = val(s.id)[0];
  if (v == 0.0) throw DomainError("recip of zero");
  Node n;
  n.op = Op::kRecip;
  n.in = {s.id};
  n.out = Tensor::scalar(1.0 / v);
  return {push(std::move(n))};
}

Var Tape::scale_by(Var a, Var s) {
  check(a);
  check(s);
  if (val(s.id).size() != 1) throw ShapeError("scale_by: scalar node required");
  Node n;
  n.op = Op::kScaleBy;
  n.in = {a.id, s.id};
  n.out = val(a.id);
  const double v = val(s.id)[0];
  for (std::size_t i = 0; i < n.out.size(); ++i) n.out[i] *= v;
  return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = val(a.id);
  const Tensor& y = val(b.id);
  if (x.cols() != y.rows())
    throw ShapeError("matmul: inner dims disagree, " + shape_str(x.shape()) + " x " +
                     shape_str(y.shape()));
  Node n;
  n.op = Op::kMatmul;
  n.in = {a.id, b.id};
  n.out = Tensor({x.rows(), y.cols()});
  mm_nn_acc(x.data(), y.data(), n.out.data(), x.rows(), x.cols(), y.cols());
  return {push(std::move(n))};
}

Var Tape::matmul_nt(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = val(a.id);
  const Tensor& y = val(b.id);
  if (x.cols() != y.cols())
    throw ShapeError("matmul_nt: inner dims disagree, " + shape_str(x.shape()) + " x " +
                     shape_str(y.shape()) + "^T");
  Node n;
  n.op = Op::kMatmulNT;
  n.in = {a.id, b.id};
  n.out = Tensor({x.rows(), y.rows()});
  mm_nt_acc(x.data(), y.data(), n.out.data(), x.rows(), x.cols(), y.rows());
  return {push(std::move(n))};
}

namespace {

// Stable row softmax / log-softmax shared by the three softmax ops.
void row_softmax(const Tensor& logits, Tensor& probs) {
  const int r = logits.rows(), c = logits.cols();
  for (int i = 0; i < r; ++i) {
    double m = logits.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, logits.at(i, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(logits.at(i, j) - m);
      probs.at(i, j) = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) probs.at(i, j) /= s;
  }
}

}  // namespace

Var Tape::softmax_rows(Var logits) {
  check(logits);
  const Tensor& l = val(logits.id);
  Node n;
  n.op = Op::kSoftmaxRows;
  n.in = {logits.id};
  n.out = Tensor(l.shape());
  row_softmax(l, n.out);
  return {push(std::move(n))};
}

Var Tape::log_softmax_rows(Var logits) {
  check(logits);
  const Tensor& l = val(logits.id);
  const int r = l.rows(), c = l.cols();
  Node n;
  n.op = Op::kLogSoftmaxRows;
  n.in = {logits.id};
  n.out = Tensor(l.shape());
  n.saved = Tensor(l.shape());  // softmax probs for backward
  for (int i = 0; i < r; ++i) {
    double m = l.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, l.at(i, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(l.at(i, j) - m);
    const double lse = m + std::log(s);
    for (int j = 0; j < c; ++j) {
      n.out.at(i, j) = l.at(i, j) - lse;
      n.saved.at(i, j) = std::exp(l.at(i, j) - lse);
    }
  }
  return {push(std::move(n))};
}

Var Tape::log_one_minus_softmax_col(Var logits, int j) {
  check(logits);
  const Tensor& l = val(logits.id);
  const int r = l.rows(), c = l.cols();
  if (j < 0 || j >= c) throw ShapeError("log_one_minus_softmax_col: column out of range");
  if (c < 2) throw ShapeError("log_one_minus_softmax_col: needs at least 2 classes");
  Node n;
  n.op = Op::kLogOneMinusSoftmaxCol;
  n.in = {logits.id};
  n.j = j;
  n.out = Tensor({r, 1});
  // saved: [r, 2c] = full softmax followed by the softmax excluding column j
  n.saved = Tensor({r, 2 * c});
  for (int i = 0; i < r; ++i) {
    double m = l.at(i, 0);
    for (int k = 1; k < c; ++k) m = std::max(m, l.at(i, k));
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += std::exp(l.at(i, k) - m);
    const double lse = m + std::log(s);

    double mx = -1e300;
    for (int k = 0; k < c; ++k)
      if (k != j) mx = std::max(mx, l.at(i, k));
    double sx = 0.0;
    for (int k = 0; k < c; ++k)
      if (k != j) sx += std::exp(l.at(i, k) - mx);
    const double lse_ex = mx + std::log(sx);

    n.out.at(i, 0) = lse_ex - lse;
    for (int k = 0; k < c; ++k) {
      n.saved.at(i, k) = std::exp(l.at(i, k) - lse);
      n.saved.at(i, c + k) = (k == j) ? 0.0 : std::exp(l.at(i, k) - lse_ex);
    }
  }
  return {push(std::move(n))};
}

Var Tape::col(Var a, int j) {
  check(a);
  const Tensor& x = val(a.id);
  if (j < 0 || j >= x.cols()) throw ShapeError("col: column out of range");
  Node n;
  n.op = Op::kCol;
  n.in = {a.id};
  n.j = j;
  n.out = Tensor({x.rows(), 1});
  for (int i = 0; i < x.rows(); ++i) n.out.at(i, 0) = x.at(i, j);
  return {push(std::move(n))};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = -1, cols = 0;
  for (Var p : parts) {
    check(p);
    const Tensor& t = val(p.id);
    if (rows < 0) rows = t.rows();
    if (t.rows() != rows) throw ShapeError("concat_cols: row counts disagree");
    cols += t.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.out = Tensor({rows, cols});
  int off = 0;
  for (Var p : parts) {
    n.in.push_back(p.id);
    const Tensor& t = val(p.id);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < t.cols(); ++j) n.out.at(i, off + j) = t.at(i, j);
    off += t.cols();
  }
  return {push(std::move(n))};
}

Var Tape::select_fill(Var x, std::vector<std::uint8_t> sel, double fill) {
  check(x);
  const Tensor& t = val(x.id);
  if (sel.size() != t.size()) throw ShapeError("select_fill: selector length mismatch");
  Node n;
  n.op = Op::kSelectFill;
  n.in = {x.id};
  n.a = fill;
  n.out = t;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (sel[i]) n.out[i] = fill;
  n.sel = std::move(sel);
  return {push(std::move(n))};
}

Var Tape::select_mix(Var x, Var r, std::vector<std::uint8_t> sel) {
  check(x);
  check(r);
  require_same_shape(val(x.id), val(r.id), "select_mix");
  const Tensor& t = val(x.id);
  if (sel.size() != t.size()) throw ShapeError("select_mix: selector length mismatch");
  Node n;
  n.op = Op::kSelectMix;
  n.in = {x.id, r.id};
  n.out = t;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (sel[i]) n.out[i] = val(r.id)[i];
  n.sel = std::move(sel);
  return {push(std::move(n))};
}

Var Tape::sum_all(Var a) {
  check(a);
  double s = 0.0;
  for (std::size_t i = 0; i < val(a.id).size(); ++i) s += val(a.id)[i];
  Node n;
  n.op = Op::kSumAll;
  n.in = {a.id};
  n.out = Tensor::scalar(s);
  return {push(std::move(n))};
}

Var Tape::mean_all(Var a) {
  check(a);
  double s = 0.0;
  const std::size_t m = val(a.id).size();
  for (std::size_t i = 0; i < m; ++i) s += val(a.id)[i];
  Node n;
  n.op = Op::kMeanAll;
  n.in = {a.id};
  n.out = Tensor::scalar(s / static_cast<double>(m));
  return {push(std::move(n))};
}

double Tape::kink_distance() const {
  double dist = 1e300;
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeakyRelu) {
      const Tensor& x = val(n.in[0]);
      for (std::size_t i = 0; i < x.size(); ++i) dist = std::min(dist, std::fabs(x[i]));
    } else if (n.op == Op::kClamp) {
      const Tensor& x = val(n.in[0]);
      for (std::size_t i = 0; i < x.size(); ++i)
        dist = std::min(dist, std::min(std::fabs(x[i] - n.a), std::fabs(x[i] - n.b)));
    }
  }
  return dist;
}

void Tape::backward(Var loss) {
  check(loss);
  if (val(loss.id).size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(val(loss.id).shape()));

  std::vector<Tensor> grads(static_cast<std::size_t>(loss.id) + 1);
  grads[static_cast<std::size_t>(loss.id)] = Tensor::scalar(1.0);

  auto g_of = [&](int id) -> Tensor& {
    Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) g = Tensor(nodes_[static_cast<std::size_t>(id)].out.shape());
    return g;
  };

  for (int id = loss.id; id >= 0; --id) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.empty()) continue;  // not on a path to the loss
    Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        acc(n.param->grad, g);
        break;
      case Op::kAdd:
        acc(g_of(n.in[0]), g);
        acc(g_of(n.in[1]), g);
        break;
      case Op::kAddRow: {
        acc(g_of(n.in[0]), g);
        Tensor& gb = g_of(n.in[1]);
        for (int r = 0; r < g.rows(); ++r)
          for (int j = 0; j < g.cols(); ++j) gb[static_cast<std::size_t>(j)] += g.at(r, j);
        break;
      }
      case Op::kSub: {
        acc(g_of(n.in[0]), g);
        Tensor& gb = g_of(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case Op::kMul: {
        Tensor& ga = g_of(n.in[0]);
        Tensor& gb = g_of(n.in[1]);
        const Tensor& av = val(n.in[0]);
        const Tensor& bv = val(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * bv[i];
          gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = g_of(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.a;
        break;
      }
      case Op::kTanh: {
        Tensor& ga = g_of(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.out[i] * n.out[i]);
        break;
      }
      case Op::kLeakyRelu: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& x = val(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : n.a);
        break;
      }
      case Op::kExp: {
        Tensor& ga = g_of(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.out[i];
        break;
      }
      case Op::kLog: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& x = val(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
        break;
      }
      case Op::kSquare: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& x = val(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
        break;
      }
      case Op::kClamp: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& x = val(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > n.a && x[i] < n.b) ga[i] += g[i];
        break;
      }
      case Op::kRecip: {
        Tensor& gs = g_of(n.in[0]);
        gs[0] -= g[0] * n.out[0] * n.out[0];  // d(1/s)/ds = -1/s^2
        break;
      }
      case Op::kScaleBy: {
        Tensor& ga = g_of(n.in[0]);
        Tensor& gs = g_of(n.in[1]);
        const Tensor& av = val(n.in[0]);
        const double sv = val(n.in[1])[0];
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * sv;
          dot += g[i] * av[i];
        }
        gs[0] += dot;
        break;
      }
      case Op::kMatmul: {
        const Tensor& av = val(n.in[0]);
        const Tensor& bv = val(n.in[1]);
        mm_nt_acc(g.data(), bv.data(), g_of(n.in[0]).data(), g.rows(), g.cols(), av.cols());
        mm_tn_acc(av.data(), g.data(), g_of(n.in[1]).data(), av.rows(), av.cols(), g.cols());
        break;
      }
      case Op::kMatmulNT: {
        const Tensor& av = val(n.in[0]);
        const Tensor& bv = val(n.in[1]);
        // ga += g @ b ; gb += g^T @ a
        mm_nn_acc(g.data(), bv.data(), g_of(n.in[0]).data(), g.rows(), g.cols(), bv.cols());
        mm_tn_acc(g.data(), av.data(), g_of(n.in[1]).data(), g.rows(), g.cols(), av.cols());
        break;
      }
      case Op::kSoftmaxRows: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& p = n.out;
        for (int i = 0; i < p.rows(); ++i) {
          double dot = 0.0;
          for (int j = 0; j < p.cols(); ++j) dot += g.at(i, j) * p.at(i, j);
          for (int j = 0; j < p.cols(); ++j) ga.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
        }
        break;
      }
      case Op::kLogSoftmaxRows: {
        Tensor& ga = g_of(n.in[0]);
        const Tensor& p = n.saved;
        for (int i = 0; i < p.rows(); ++i) {
          double rowsum = 0.0;
          for (int j = 0; j < p.cols(); ++j) rowsum += g.at(i, j);
          for (int j = 0; j < p.cols(); ++j) ga.at(i, j) += g.at(i, j) - p.at(i, j) * rowsum;
        }
        break;
      }
      case Op::kLogOneMinusSoftmaxCol: {
        Tensor& ga = g_of(n.in[0]);
        const int c = ga.cols();
        for (int i = 0; i < ga.rows(); ++i) {
          const double gi = g.at(i, 0);
          for (int k = 0; k < c; ++k) {
            const double p = n.saved.at(i, k);
            const double pex = n.saved.at(i, c + k);
            ga.at(i, k) += gi * (pex - p);
          }
        }
        break;
      }
      case Op::kCol: {
        Tensor& ga = g_of(n.in[0]);
        for (int i = 0; i < ga.rows(); ++i) ga.at(i, n.j) += g.at(i, 0);
        break;
      }
      case Op::kConcatCols: {
        int off = 0;
        for (int src : n.in) {
          Tensor& gs = g_of(src);
          for (int i = 0; i < gs.rows(); ++i)
            for (int j = 0; j < gs.cols(); ++j) gs.at(i, j) += g.at(i, off + j);
          off += gs.cols();
        }
        break;
      }
      case Op::kSelectFill: {
        Tensor& ga = g_of(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!n.sel[i]) ga[i] += g[i];
        break;
      }
      case Op::kSelectMix: {
        Tensor& gx = g_of(n.in[0]);
        Tensor& gr = g_of(n.in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (n.sel[i])
            gr[i] += g[i];
          else
            gx[i] += g[i];
        }
        break;
      }
      case Op::kSumAll: {
        Tensor& ga = g_of(n.in[0]);
        const double gs = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
      case Op::kMeanAll: {
        Tensor& ga = g_of(n.in[0]);
        const double gs = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
    }
  }
}

double grad_check(ParamStore& params, const std::function<Var(Tape&)>& build, double h) {
  params.zero_grads();
  {
    Tape t;
    Var loss = build(t);
    t.backward(loss);
  }
  std::map<std::string, Tensor> analytic;
  for (auto& [name, p] : params.entries()) analytic.emplace(name, p.grad);

  auto eval = [&]() {
    Tape t;
    Var loss = build(t);
    return t.value(loss)[0];
  };

  double max_rel = 0.0;
  for (auto& [name, p] : params.entries()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = eval();
      p.value[i] = orig - h;
      const double dn = eval();
      p.value[i] = orig;
      const double central = (up - dn) / (2.0 * h);
      const double rel =
          std::fabs(analytic.at(name)[i] - central) / (std::fabs(central) + 1e-8);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace gali
