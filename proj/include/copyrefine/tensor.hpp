#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace copyrefine {

class ShapeMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DetachedTensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Vectors are 1 x n rows.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  Tensor(int r, int c, std::vector<double> values);
  static Tensor row(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Tensor&) const = default;
};

/// Portable uniform double in [0, 1) from a 64-bit engine.
double uniform01(std::mt19937_64& rng);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Owns parameters in creation order; pointers stay valid for its lifetime.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, int rows, int cols);
  /// Uniform(-bound, bound) initialisation.
  Parameter& add_uniform(const std::string& name, int rows, int cols, double bound, std::mt19937_64& rng);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Var constant(Tensor value);
  /// Leaf for a parameter; repeated calls on one tape return the same node.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  int rows(Var v) const { return value(v).rows; }
  int cols(Var v) const { return value(v).cols; }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Records a result; `back` receives d(loss)/d(output) and calls accumulate.
  Var record(Tensor value, const std::vector<Var>& inputs, Backward back);
  void accumulate(Var v, const Tensor& grad);

  /// Reverse sweep from a 1x1 loss; parameter gradients are added to Parameter::grad.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward back;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Primitive operations. Shapes are checked and mismatches throw ShapeMismatchError.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// a (m x n) plus a 1 x n row broadcast down every row.
Var add_row(Tape& t, Var a, Var row);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// a * s + shift elementwise.
Var affine(Tape& t, Var a, double s, double shift);
/// a multiplied by the 1x1 value s.
Var mul_scalar(Tape& t, Var a, Var s);
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var stack_rows(Tape& t, const std::vector<Var>& rows);
Var slice_cols(Tape& t, Var a, int begin, int end);
/// Output row i is row index[i] of a.
Var gather_rows(Tape& t, Var a, const std::vector<int>& index);
/// Output row i is the sum of the rows of a listed in groups[i] (zero when empty).
Var gather_sum(Tape& t, Var a, const std::vector<std::vector<int>>& groups);
/// 1 x width row with a[j] added at column index[j].
Var scatter_cols(Tape& t, Var a, const std::vector<int>& index, int width);
Var sum(Tape& t, Var a);
Var sum_rows(Tape& t, Var a);
Var mean_rows(Tape& t, Var a);
Var dot(Tape& t, Var a, Var b);
Var pick(Tape& t, Var a, int r, int c);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var log_sigmoid(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope = 0.01);
Var log(Tape& t, Var a);
Var reciprocal(Tape& t, Var a);
/// Row-wise softmax and log-softmax.
Var softmax(Tape& t, Var a);
Var log_softmax(Tape& t, Var a);

}  // namespace copyrefine
