#pragma once

// Minimal fully connected network: rectifier hidden layers, identity output
// layer, softmax cross-entropy, exact weighted-loss gradients and Adam.
//
// Batches are row-major in the statistical sense: one example per row, so a
// batch of B inputs is a B x d matrix and its logits a B x K matrix. Layer l
// stores W_l as (out x in), so Z_l = A_{l-1} W_l^T + 1 b_l^T.

#include "conflearn/common.hpp"
#include "conflearn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace conflearn {

template <typename Scalar>
struct BasicMlp {
  std::vector<Index> layer_dims;  // d, hidden..., K
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;

  Index input_dim() const { return layer_dims.front(); }
  Index num_classes() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }

  Index parameter_count() const {
    Index total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      total += weights[l].size() + biases[l].size();
    }
    return total;
  }

  /// Same layer shapes, all entries zero. Used for gradients and moments.
  BasicMlp zeros_like() const {
    BasicMlp out;
    out.layer_dims = layer_dims;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(MatrixX<Scalar>::Zero(weights[l].rows(), weights[l].cols()));
      out.biases.push_back(VectorX<Scalar>::Zero(biases[l].size()));
    }
    return out;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out;
    out.layer_dims = layer_dims;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(weights[l].template cast<Other>());
      out.biases.push_back(biases[l].template cast<Other>());
    }
    return out;
  }

  friend bool operator==(const BasicMlp& a, const BasicMlp& b) {
    if (a.layer_dims != b.layer_dims) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

using Mlp = BasicMlp<double>;

namespace detail {
inline void check_layer_dims(const std::vector<Index>& dims) {
  if (dims.size() < 2) throw ArgumentError("mlp needs at least input and output dims");
  for (Index d : dims) {
    if (d < 1) throw ArgumentError("mlp layer widths must be positive");
  }
}
}  // namespace detail

/// Zero-initialized network of the given shape.
template <typename Scalar = double>
BasicMlp<Scalar> make_zero_mlp(const std::vector<Index>& dims) {
  detail::check_layer_dims(dims);
  BasicMlp<Scalar> model;
  model.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    model.weights.push_back(MatrixX<Scalar>::Zero(dims[l + 1], dims[l]));
    model.biases.push_back(VectorX<Scalar>::Zero(dims[l + 1]));
  }
  return model;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename Scalar = double>
BasicMlp<Scalar> make_mlp(const std::vector<Index>& dims, std::uint64_t seed) {
  BasicMlp<Scalar> model = make_zero_mlp<Scalar>(dims);
  Rng rng(seed);
  for (auto& w : model.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index c = 0; c < w.cols(); ++c) {
      for (Index r = 0; r < w.rows(); ++r) {
        w(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
      }
    }
  }
  return model;
}

/// Logits for a batch (B x d) -> (B x K).
template <typename Scalar>
MatrixX<Scalar> forward_batch(const BasicMlp<Scalar>& model, const MatrixX<Scalar>& inputs) {
  if (inputs.cols() != model.input_dim()) {
    std::ostringstream msg;
    msg << "input has " << inputs.cols() << " features, model expects " << model.input_dim();
    throw ShapeError(msg.str());
  }
  MatrixX<Scalar> act = inputs;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    MatrixX<Scalar> z = act * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    if (l + 1 < model.num_layers()) {
      act = z.cwiseMax(Scalar(0));
    } else {
      act = std::move(z);
    }
  }
  return act;
}

template <typename Scalar>
VectorX<Scalar> forward(const BasicMlp<Scalar>& model, const VectorX<Scalar>& x) {
  if (x.size() != model.input_dim()) {
    std::ostringstream msg;
    msg << "input has length " << x.size() << ", model expects " << model.input_dim();
    throw ShapeError(msg.str());
  }
  return forward_batch<Scalar>(model, x.transpose()).row(0).transpose();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  return top + std::log((logits.array() - top).exp().sum());
}

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// -log softmax(logits)_y, via max-subtracted log-sum-exp.
template <typename Derived>
typename Derived::Scalar softmax_ce(const Eigen::MatrixBase<Derived>& logits, ClassIndex y) {
  if (y < 0 || y >= logits.size()) {
    throw ClassIndexError("class index " + std::to_string(y) + " outside [0, " +
                          std::to_string(logits.size()) + ")");
  }
  using Scalar = typename Derived::Scalar;
  return std::max(Scalar(0), log_sum_exp(logits) - logits(y));
}

/// Argmax with ties broken by the lowest index.
template <typename Derived>
ClassIndex argmax_lowest(const Eigen::MatrixBase<Derived>& values) {
  ClassIndex best = 0;
  for (Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = static_cast<ClassIndex>(i);
  }
  return best;
}

template <typename Scalar>
ClassIndex predict(const BasicMlp<Scalar>& model, const VectorX<Scalar>& x) {
  return argmax_lowest(forward(model, x));
}

template <typename Scalar>
std::vector<ClassIndex> predict_batch(const BasicMlp<Scalar>& model, const MatrixX<Scalar>& inputs) {
  const MatrixX<Scalar> logits = forward_batch(model, inputs);
  std::vector<ClassIndex> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = argmax_lowest(logits.row(i).transpose());
  }
  return out;
}

/// Per-row sum_y w_y * CE(logits_row, y) for a logits matrix and weight matrix
/// of the same shape.
template <typename Scalar>
VectorX<Scalar> weighted_ce_rows(const MatrixX<Scalar>& logits, const MatrixX<Scalar>& weights) {
  VectorX<Scalar> out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar lse = log_sum_exp(logits.row(i));
    out(i) = (weights.row(i).array() * (lse - logits.row(i).array())).sum();
  }
  return out;
}

template <typename Scalar>
void check_loss_weights(const MatrixX<Scalar>& weights) {
  for (Index i = 0; i < weights.size(); ++i) {
    const Scalar w = weights.data()[i];
    if (!std::isfinite(static_cast<double>(w)) || w < Scalar(0)) {
      throw WeightDomainError("loss weights must be finite and nonnegative");
    }
  }
}

template <typename Scalar>
struct WeightedGradient {
  BasicMlp<Scalar> grad;
  Scalar loss;
};

/// Gradient of (1/B) sum_i sum_y w_iy CE(g(x_i), y) with respect to every
/// parameter, together with its value. `inputs` is B x d, `weights` B x K.
template <typename Scalar>
WeightedGradient<Scalar> weighted_batch_grad(const BasicMlp<Scalar>& model,
                                             const MatrixX<Scalar>& inputs,
                                             const MatrixX<Scalar>& weights) {
  const Index batch = inputs.rows();
  if (batch == 0) throw ArgumentError("weighted_batch_grad: empty batch");
  if (weights.rows() != batch || weights.cols() != model.num_classes()) {
    throw ShapeError("weighted_batch_grad: weights must be B x K");
  }
  check_loss_weights(weights);

  const std::size_t layers = model.num_layers();
  std::vector<MatrixX<Scalar>> acts;  // acts[0] = inputs, acts[l] = output of layer l-1
  std::vector<MatrixX<Scalar>> pre;   // pre-activations
  acts.reserve(layers + 1);
  pre.reserve(layers);
  if (inputs.cols() != model.input_dim()) {
    throw ShapeError("weighted_batch_grad: input width does not match model");
  }
  acts.push_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    MatrixX<Scalar> z = acts.back() * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    pre.push_back(z);
    if (l + 1 < layers) {
      acts.push_back(z.cwiseMax(Scalar(0)));
    }
  }
  const MatrixX<Scalar>& logits = pre.back();

  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
  MatrixX<Scalar> delta(batch, model.num_classes());
  Scalar loss(0);
  for (Index i = 0; i < batch; ++i) {
    const Scalar top = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - top).eval();
    const Scalar sum_exp = shifted.exp().sum();
    const Scalar lse = top + std::log(sum_exp);
    const Scalar mass = weights.row(i).sum();
    loss += (weights.row(i).array() * (lse - logits.row(i).array())).sum();
    delta.row(i) = (mass * (shifted.exp() / sum_exp) - weights.row(i).array()).matrix() * inv_batch;
  }
  loss *= inv_batch;

  WeightedGradient<Scalar> out{model.zeros_like(), loss};
  for (std::size_t l = layers; l-- > 0;) {
    out.grad.weights[l] = delta.transpose() * acts[l];
    out.grad.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      MatrixX<Scalar> back = delta * model.weights[l];
      delta = (pre[l - 1].array() > Scalar(0)).select(back, Scalar(0));
    }
  }
  return out;
}

/// Flattened parameter view in a fixed order (layer by layer, weights
/// column-major then biases). Used by optimizers and gradient checks.
template <typename Scalar>
VectorX<Scalar> flatten(const BasicMlp<Scalar>& model) {
  VectorX<Scalar> out(model.parameter_count());
  Index pos = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& w = model.weights[l];
    out.segment(pos, w.size()) = Eigen::Map<const VectorX<Scalar>>(w.data(), w.size());
    pos += w.size();
    out.segment(pos, model.biases[l].size()) = model.biases[l];
    pos += model.biases[l].size();
  }
  return out;
}

template <typename Scalar>
void unflatten(const VectorX<Scalar>& flat, BasicMlp<Scalar>& model) {
  if (flat.size() != model.parameter_count()) throw ShapeError("unflatten: size mismatch");
  Index pos = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& w = model.weights[l];
    Eigen::Map<VectorX<Scalar>>(w.data(), w.size()) = flat.segment(pos, w.size());
    pos += w.size();
    model.biases[l] = flat.segment(pos, model.biases[l].size());
    pos += model.biases[l].size();
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW-style)
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  long step = 0;
  BasicMlp<Scalar> first_moment;
  BasicMlp<Scalar> second_moment;
};

template <typename Scalar>
AdamState<Scalar> make_adam_state(const BasicMlp<Scalar>& model, const AdamConfig& config) {
  return AdamState<Scalar>{config, 0, model.zeros_like(), model.zeros_like()};
}

/// One bias-corrected Adam update in place. Decoupled weight decay shrinks
/// parameters by lr * decay before the moment step.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, BasicMlp<Scalar>& model, const BasicMlp<Scalar>& grad) {
  if (grad.layer_dims != model.layer_dims || state.first_moment.layer_dims != model.layer_dims) {
    throw ShapeError("adam_step: gradient shape does not match model");
  }
  if (!grad.all_finite()) {
    throw DivergenceError("adam_step: non-finite gradient", -1);
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar lr = static_cast<Scalar>(c.learning_rate);
  const Scalar eps = static_cast<Scalar>(c.epsilon);
  const Scalar correction1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar correction2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  const Scalar shrink = Scalar(1) - lr * static_cast<Scalar>(c.weight_decay);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    const auto m_hat = (m.array() / correction1).eval();
    const auto v_hat = (v.array() / correction2).eval();
    if (c.weight_decay > 0.0) param *= shrink;
    param.array() -= lr * m_hat / (v_hat.sqrt() + eps);
  };
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    update(model.weights[l], grad.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(model.biases[l], grad.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

}  // namespace conflearn
