#include "copyrefine/nn.hpp"

#include <cmath>

namespace copyrefine {

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng, bool bias)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = &params.add_uniform(name + ".weight", in, out, bound, rng);
  if (bias) bias_ = &params.add_uniform(name + ".bias", 1, out, bound, rng);
}

Var Linear::operator()(Tape& t, Var x) const {
  Var y = matmul(t, x, t.param(*weight_));
  if (bias_) y = add_row(t, y, t.param(*bias_));
  return y;
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, int in, int hidden, int out,
                         Activation output, std::mt19937_64& rng)
    : hidden_(params, name + ".hidden", in, hidden, rng),
      output_(params, name + ".output", hidden, out, rng),
      activation_(output) {}

Var FeedForward::logits(Tape& t, Var x) const { return output_(t, tanh(t, hidden_(t, x))); }

Var FeedForward::operator()(Tape& t, Var x) const {
  const Var y = logits(t, x);
  switch (activation_) {
    case Activation::Tanh:
      return tanh(t, y);
    case Activation::Sigmoid:
      return sigmoid(t, y);
    case Activation::Softmax:
      return softmax(t, y);
    case Activation::None:
      break;
  }
  return y;
}

GruCell::GruCell(ParameterSet& params, const std::string& name, int input, int hidden, std::mt19937_64& rng)
    : update_(params, name + ".z", input + hidden, hidden, rng),
      reset_(params, name + ".r", input + hidden, hidden, rng),
      candidate_(params, name + ".h", input + hidden, hidden, rng),
      hidden_(hidden) {}

Var GruCell::step(Tape& t, Var x, Var h_sum) const {
  const Var xh = concat_cols(t, {x, h_sum});
  const Var z = sigmoid(t, update_(t, xh));
  const Var r = sigmoid(t, reset_(t, xh));
  const Var cand = tanh(t, candidate_(t, concat_cols(t, {x, mul(t, r, h_sum)})));
  // h = (1 - z) * h_sum + z * cand
  return add(t, h_sum, mul(t, z, sub(t, cand, h_sum)));
}

Var GruCell::operator()(Tape& t, Var x, const std::vector<Var>& incoming) const {
  Var h_sum;
  if (incoming.empty()) {
    h_sum = t.constant(Tensor(t.rows(x), hidden_));
  } else {
    h_sum = incoming[0];
    for (std::size_t i = 1; i < incoming.size(); ++i) h_sum = add(t, h_sum, incoming[i]);
  }
  return step(t, x, h_sum);
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config), lr_(config.lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].value.rows, params[i].value.cols);
    v_.emplace_back(params[i].value.rows, params[i].value.cols);
  }
}

void Adam::step() {
  double sq = 0.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double g : params_[i].grad.data) sq += g * g;
  }
  last_norm_ = std::sqrt(sq);
  if (!std::isfinite(last_norm_)) throw NonFiniteError("non-finite gradient");
  const double clip = (config_.clip_norm > 0.0 && last_norm_ > config_.clip_norm) ? config_.clip_norm / last_norm_ : 1.0;
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double g = p.grad.data[k] * clip;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      p.value.data[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
  }
}

}  // namespace copyrefine
