#pragma once

#include <random>
#include <string>
#include <vector>

#include "copyrefine/tensor.hpp"

namespace copyrefine {

/// Affine map on row vectors: y = x W + b with W of shape in x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng, bool bias = true);

  Var operator()(Tape& t, Var x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

enum class Activation { None, Tanh, Sigmoid, Softmax };

/// One hidden tanh layer followed by an output layer and activation.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, int in, int hidden, int out, Activation output,
              std::mt19937_64& rng);

  /// Output before the final activation.
  Var logits(Tape& t, Var x) const;
  Var operator()(Tape& t, Var x) const;
  int in() const { return hidden_.in(); }
  int out() const { return output_.out(); }

 private:
  Linear hidden_;
  Linear output_;
  Activation activation_ = Activation::None;
};

/// Gated recurrent unit whose incoming hidden states are summed before gating.
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterSet& params, const std::string& name, int input, int hidden, std::mt19937_64& rng);

  /// Row-batched update: x is m x input, h_sum is m x hidden.
  Var step(Tape& t, Var x, Var h_sum) const;
  /// Single update from a set of incoming hiddens (empty set acts as zero).
  Var operator()(Tape& t, Var x, const std::vector<Var>& incoming) const;
  int hidden() const { return hidden_; }

 private:
  Linear update_;
  Linear reset_;
  Linear candidate_;
  int hidden_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; non-positive disables it.
  double clip_norm = 10.0;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config = {});

  /// Applies one update from the accumulated gradients (gradients are left untouched).
  void step();
  void anneal(double factor) { lr_ *= factor; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  /// Norm of the gradient seen by the last step, before clipping.
  double last_grad_norm() const { return last_norm_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  double lr_;
  long steps_ = 0;
  double last_norm_ = 0.0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace copyrefine
