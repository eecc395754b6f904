#include "copyrefine/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace copyrefine {

namespace {

[[noreturn]] void mismatch(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ShapeMismatchError(op + ": shapes " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " and " +
                           std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

void require_same(const std::string& op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) mismatch(op, a, b);
}

}  // namespace

Tensor::Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {
    throw ShapeMismatchError("tensor value count does not match shape");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor(1, n, std::move(values));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Parameter& ParameterSet::add(const std::string& name, int rows, int cols) {
  if (find(name)) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back(std::make_unique<Parameter>(Parameter{name, Tensor(rows, cols), Tensor(rows, cols)}));
  return *params_.back();
}

Parameter& ParameterSet::add_uniform(const std::string& name, int rows, int cols, double bound, std::mt19937_64& rng) {
  Parameter& p = add(name, rows, cols);
  for (auto& x : p.value.data) x = (2.0 * uniform01(rng) - 1.0) * bound;
  return p;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  const auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {it->second};
  param_nodes_[&p] = static_cast<int>(nodes_.size());
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

double Tape::scalar(Var v) const {
  const Tensor& x = value(v);
  if (x.size() != 1) throw ShapeMismatchError("expected a 1x1 tensor");
  return x.data[0];
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward back) {
  for (double x : value.data) {
    if (!std::isfinite(x)) throw NonFiniteError("non-finite value in forward pass");
  }
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || requires_grad(in);
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Tensor& grad) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < grad.data.size(); ++i) n.grad.data[i] += grad.data[i];
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeMismatchError("loss must be a scalar");
  if (!requires_grad(loss)) throw DetachedTensorError("loss does not depend on any parameter");
  for (auto& n : nodes_) n.has_grad = false;
  accumulate(loss, Tensor(1, 1, 1.0));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.param) {
      for (std::size_t k = 0; k < n.grad.data.size(); ++k) n.param->grad.data[k] += n.grad.data[k];
    } else if (n.back) {
      const Tensor g = std::move(n.grad);
      n.back(*this, g);
    }
    n.has_grad = false;
    n.grad = Tensor();
  }
}

Var add(Tape& t, Var a, Var b) {
  require_same("add", t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& y = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same("sub", t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& y = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= y.data[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    Tensor neg = g;
    for (auto& x : neg.data) x = -x;
    tp.accumulate(b, neg);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Tensor& x = t.value(a);
  const Tensor& r = t.value(row);
  if (r.rows != 1 || r.cols != x.cols) mismatch("add_row", x, r);
  Tensor out = x;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) out.at(i, j) += r.data[static_cast<std::size_t>(j)];
  }
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    Tensor gr(1, g.cols);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) gr.data[static_cast<std::size_t>(j)] += g.at(i, j);
    }
    tp.accumulate(row, gr);
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same("mul", t.value(a), t.value(b));
  Tensor out = t.value(a);
  const Tensor& y = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= y.data[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(b);
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] *= y.data[i];
      gb.data[i] *= x.data[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var scale(Tape& t, Var a, double s) { return affine(t, a, s, 0.0); }

Var affine(Tape& t, Var a, double s, double shift) {
  Tensor out = t.value(a);
  for (auto& x : out.data) x = x * s + shift;
  return t.record(std::move(out), {a}, [a, s](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (auto& x : ga.data) x *= s;
    tp.accumulate(a, ga);
  });
}

Var mul_scalar(Tape& t, Var a, Var s) {
  const double k = t.scalar(s);
  Tensor out = t.value(a);
  for (auto& x : out.data) x *= k;
  return t.record(std::move(out), {a, s}, [a, s](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const double k = tp.scalar(s);
    Tensor ga = g;
    double gs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] *= k;
      gs += g.data[i] * x.data[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(s, Tensor(1, 1, gs));
  });
}

namespace {

// out(m x n) += a(m x k) * b(k x n), with optional transposes of the stored operands.
void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out) {
  const int m = out.rows, n = out.cols;
  const int k = ta ? a.rows : a.cols;
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double x = ta ? a.at(p, i) : a.at(i, p);
      if (x == 0.0) continue;
      double* orow = &out.data[static_cast<std::size_t>(i) * n];
      if (!tb) {
        const double* brow = &b.data[static_cast<std::size_t>(p) * b.cols];
        for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
      } else {
        for (int j = 0; j < n; ++j) orow[j] += x * b.at(j, p);
      }
    }
  }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.cols != y.rows) mismatch("matmul", x, y);
  Tensor out(x.rows, y.cols);
  gemm(x, false, y, false, out);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor ga(x.rows, x.cols);
      gemm(g, false, y, true, ga);
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor gb(y.rows, y.cols);
      gemm(x, true, g, false, gb);
      tp.accumulate(b, gb);
    }
  });
}

Var transpose(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor ga(g.cols, g.rows);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) ga.at(j, i) = g.at(i, j);
    }
    tp.accumulate(a, ga);
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatchError("concat of nothing");
  const int rows = t.rows(parts[0]);
  int cols = 0;
  for (Var p : parts) {
    if (t.rows(p) != rows) mismatch("concat_cols", t.value(parts[0]), t.value(p));
    cols += t.cols(p);
  }
  Tensor out(rows, cols);
  int offset = 0;
  for (Var p : parts) {
    const Tensor& x = t.value(p);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(&x.data[static_cast<std::size_t>(i) * x.cols], x.cols, &out.data[static_cast<std::size_t>(i) * cols + offset]);
    }
    offset += x.cols;
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, const Tensor& g) {
    int offset = 0;
    for (Var p : parts) {
      const int c = tp.cols(p);
      if (tp.requires_grad(p)) {
        Tensor gp(g.rows, c);
        for (int i = 0; i < g.rows; ++i) {
          std::copy_n(&g.data[static_cast<std::size_t>(i) * g.cols + offset], c, &gp.data[static_cast<std::size_t>(i) * c]);
        }
        tp.accumulate(p, gp);
      }
      offset += c;
    }
  });
}

Var stack_rows(Tape& t, const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeMismatchError("stack of nothing");
  const int cols = t.cols(rows[0]);
  int total = 0;
  for (Var r : rows) {
    if (t.cols(r) != cols) mismatch("stack_rows", t.value(rows[0]), t.value(r));
    total += t.rows(r);
  }
  Tensor out(total, cols);
  std::size_t offset = 0;
  for (Var r : rows) {
    const Tensor& x = t.value(r);
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += x.size();
  }
  return t.record(std::move(out), rows, [rows](Tape& tp, const Tensor& g) {
    std::size_t offset = 0;
    for (Var r : rows) {
      const Tensor& x = tp.value(r);
      if (tp.requires_grad(r)) {
        Tensor gr(x.rows, x.cols);
        std::copy_n(g.data.begin() + static_cast<std::ptrdiff_t>(offset), x.size(), gr.data.begin());
        tp.accumulate(r, gr);
      }
      offset += x.size();
    }
  });
}

Var slice_cols(Tape& t, Var a, int begin, int end) {
  const Tensor& x = t.value(a);
  if (begin < 0 || end > x.cols || begin > end) throw ShapeMismatchError("slice_cols out of range");
  const int w = end - begin;
  Tensor out(x.rows, w);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, begin + j);
  }
  return t.record(std::move(out), {a}, [a, begin, w](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.rows, x.cols);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < w; ++j) ga.at(i, begin + j) = g.at(i, j);
    }
    tp.accumulate(a, ga);
  });
}

Var gather_rows(Tape& t, Var a, const std::vector<int>& index) {
  const Tensor& x = t.value(a);
  Tensor out(static_cast<int>(index.size()), x.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows) throw ShapeMismatchError("gather_rows index out of range");
    std::copy_n(&x.data[static_cast<std::size_t>(index[i]) * x.cols], x.cols, &out.data[i * x.cols]);
  }
  return t.record(std::move(out), {a}, [a, index](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.rows, x.cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
      for (int j = 0; j < x.cols; ++j) ga.at(index[i], j) += g.at(static_cast<int>(i), j);
    }
    tp.accumulate(a, ga);
  });
}

Var gather_sum(Tape& t, Var a, const std::vector<std::vector<int>>& groups) {
  const Tensor& x = t.value(a);
  Tensor out(static_cast<int>(groups.size()), x.cols);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (int r : groups[i]) {
      if (r < 0 || r >= x.rows) throw ShapeMismatchError("gather_sum index out of range");
      for (int j = 0; j < x.cols; ++j) out.at(static_cast<int>(i), j) += x.at(r, j);
    }
  }
  return t.record(std::move(out), {a}, [a, groups](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.rows, x.cols);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (int r : groups[i]) {
        for (int j = 0; j < x.cols; ++j) ga.at(r, j) += g.at(static_cast<int>(i), j);
      }
    }
    tp.accumulate(a, ga);
  });
}

Var scatter_cols(Tape& t, Var a, const std::vector<int>& index, int width) {
  const Tensor& x = t.value(a);
  if (x.rows != 1 || static_cast<std::size_t>(x.cols) != index.size()) throw ShapeMismatchError("scatter_cols shape");
  Tensor out(1, width);
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] < 0 || index[j] >= width) throw ShapeMismatchError("scatter_cols index out of range");
    out.data[static_cast<std::size_t>(index[j])] += x.data[j];
  }
  return t.record(std::move(out), {a}, [a, index](Tape& tp, const Tensor& g) {
    Tensor ga(1, static_cast<int>(index.size()));
    for (std::size_t j = 0; j < index.size(); ++j) ga.data[j] = g.data[static_cast<std::size_t>(index[j])];
    tp.accumulate(a, ga);
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double x : t.value(a).data) s += x;
  return t.record(Tensor(1, 1, s), {a}, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    tp.accumulate(a, Tensor(x.rows, x.cols, g.data[0]));
  });
}

Var sum_rows(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(1, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) out.data[static_cast<std::size_t>(j)] += x.at(i, j);
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
      for (int j = 0; j < x.cols; ++j) ga.at(i, j) = g.data[static_cast<std::size_t>(j)];
    }
    tp.accumulate(a, ga);
  });
}

Var mean_rows(Tape& t, Var a) {
  const int n = t.rows(a);
  if (n == 0) throw ShapeMismatchError("mean of an empty set");
  return scale(t, sum_rows(t, a), 1.0 / n);
}

Var dot(Tape& t, Var a, Var b) {
  require_same("dot", t.value(a), t.value(b));
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.data[i] * y.data[i];
  return t.record(Tensor(1, 1, s), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    Tensor ga = tp.value(b), gb = tp.value(a);
    for (auto& v : ga.data) v *= g.data[0];
    for (auto& v : gb.data) v *= g.data[0];
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var pick(Tape& t, Var a, int r, int c) {
  const Tensor& x = t.value(a);
  if (r < 0 || r >= x.rows || c < 0 || c >= x.cols) throw ShapeMismatchError("pick out of range");
  return t.record(Tensor(1, 1, x.at(r, c)), {a}, [a, r, c](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor ga(x.rows, x.cols);
    ga.at(r, c) = g.data[0];
    tp.accumulate(a, ga);
  });
}

namespace {

// Elementwise op whose derivative is expressed through input x and output y.
template <class F, class D>
Var unary(Tape& t, Var a, F f, D dfdx) {
  Tensor out = t.value(a);
  for (auto& x : out.data) x = f(x);
  const int out_id = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, out_id, dfdx](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(Var{out_id});
    Tensor ga = g;
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] *= dfdx(x.data[i], y.data[i]);
    tp.accumulate(a, ga);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var tanh(Tape& t, Var a) {
  return unary(t, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Tape& t, Var a) {
  return unary(t, a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Tape& t, Var a) {
  return unary(
      t, a, [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 - stable_sigmoid(x); });
}

Var leaky_relu(Tape& t, Var a, double slope) {
  return unary(
      t, a, [slope](double x) { return x > 0 ? x : slope * x; }, [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var log(Tape& t, Var a) {
  for (double x : t.value(a).data) {
    if (!(x > 0.0)) throw NonFiniteError("log of a non-positive value");
  }
  return unary(t, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var reciprocal(Tape& t, Var a) {
  for (double x : t.value(a).data) {
    if (x == 0.0) throw NonFiniteError("reciprocal of zero");
  }
  return unary(t, a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var softmax(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double m = -INFINITY;
    for (int j = 0; j < x.cols; ++j) m = std::max(m, x.at(i, j));
    double z = 0.0;
    for (int j = 0; j < x.cols; ++j) z += out.at(i, j) = std::exp(x.at(i, j) - m);
    for (int j = 0; j < x.cols; ++j) out.at(i, j) /= z;
  }
  const int out_id = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, out_id](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{out_id});
    Tensor ga(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
      double inner = 0.0;
      for (int j = 0; j < y.cols; ++j) inner += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols; ++j) ga.at(i, j) = y.at(i, j) * (g.at(i, j) - inner);
    }
    tp.accumulate(a, ga);
  });
}

Var log_softmax(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double m = -INFINITY;
    for (int j = 0; j < x.cols; ++j) m = std::max(m, x.at(i, j));
    double z = 0.0;
    for (int j = 0; j < x.cols; ++j) z += std::exp(x.at(i, j) - m);
    const double lz = m + std::log(z);
    for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) - lz;
  }
  const int out_id = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, out_id](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{out_id});
    Tensor ga(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
      double total = 0.0;
      for (int j = 0; j < y.cols; ++j) total += g.at(i, j);
      for (int j = 0; j < y.cols; ++j) ga.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * total;
    }
    tp.accumulate(a, ga);
  });
}

}  // namespace copyrefine
