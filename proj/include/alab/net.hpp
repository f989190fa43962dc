#ifndef ALAB_NET_HPP_
#define ALAB_NET_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alab/core.hpp"

namespace alab {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kLogFloor = 1e-12;

// Feed-forward network with rectifier hidden layers and a softmax output.
// weights[l] is (out x in); layer widths are input, hidden..., output.
template <typename Scalar>
struct Mlp {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;

  static Mlp zeros(std::span<const int> widths) {
    if (widths.empty()) throw std::invalid_argument("Mlp needs at least an input width");
    Mlp p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      p.weights.push_back(MatrixX<Scalar>::Zero(widths[l + 1], widths[l]));
      p.biases.push_back(VectorX<Scalar>::Zero(widths[l + 1]));
    }
    p.input_width_ = widths[0];
    return p;
  }

  // Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static Mlp glorot(std::span<const int> widths, Rng& rng) {
    Mlp p = zeros(widths);
    for (auto& w : p.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(u(rng));
    }
    return p;
  }

  int input_dim() const { return input_width_; }
  int output_dim() const {
    return weights.empty() ? input_width_ : static_cast<int>(weights.back().rows());
  }
  int num_layers() const { return static_cast<int>(weights.size()); }

  std::vector<int> widths() const {
    std::vector<int> w{input_width_};
    for (const auto& m : weights) w.push_back(static_cast<int>(m.rows()));
    return w;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  VectorX<Scalar> flatten() const {
    VectorX<Scalar> out(parameter_count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.segment(at, weights[l].size()) = weights[l].reshaped();
      at += weights[l].size();
      out.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    return out;
  }

  void unflatten(const VectorX<Scalar>& flat) {
    if (flat.size() != parameter_count())
      throw DimensionMismatch("parameter vector has wrong length");
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l].reshaped() = flat.segment(at, weights[l].size());
      at += weights[l].size();
      biases[l] = flat.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }

  Mlp zeros_like() const { return zeros(widths()); }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out = Mlp<Other>::zeros(widths());
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights[l] = weights[l].template cast<Other>();
      out.biases[l] = biases[l].template cast<Other>();
    }
    return out;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.widths() != b.widths()) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l)
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    return true;
  }

 private:
  int input_width_ = 0;
};

// Column-wise softmax with max subtraction.
template <typename Derived>
auto softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = logits;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return out;
}

// Layer inputs kept for backpropagation. inputs[l] feeds layer l; probs are
// the softmax outputs, one column per sample.
template <typename Scalar>
struct ForwardCache {
  std::vector<MatrixX<Scalar>> inputs;
  MatrixX<Scalar> probs;
};

template <typename Scalar>
ForwardCache<Scalar> forward_batch(const Mlp<Scalar>& p, const MatrixX<Scalar>& states) {
  if (states.rows() != p.input_dim())
    throw DimensionMismatch("network expects input dimension " + std::to_string(p.input_dim()) +
                            ", got " + std::to_string(states.rows()));
  ForwardCache<Scalar> cache;
  MatrixX<Scalar> h = states;
  for (int l = 0; l < p.num_layers(); ++l) {
    cache.inputs.push_back(h);
    MatrixX<Scalar> z = p.weights[l] * h;
    z.colwise() += p.biases[l];
    if (l + 1 < p.num_layers()) z = z.cwiseMax(Scalar(0));
    h = std::move(z);
  }
  cache.probs = softmax_columns(h);
  return cache;
}

// phi(. | s): softmax over the output units.
template <typename Scalar>
VectorX<Scalar> forward(const Mlp<Scalar>& p, const VectorX<Scalar>& s) {
  if (s.size() != p.input_dim())
    throw DimensionMismatch("network expects input dimension " + std::to_string(p.input_dim()) +
                            ", got " + std::to_string(s.size()));
  VectorX<Scalar> h = s;
  for (int l = 0; l < p.num_layers(); ++l) {
    VectorX<Scalar> z = p.weights[l] * h + p.biases[l];
    if (l + 1 < p.num_layers()) z = z.cwiseMax(Scalar(0));
    h = std::move(z);
  }
  return softmax_columns(h);
}

// Gradient of a loss w.r.t. every parameter, given dLoss/dlogits.
template <typename Scalar>
Mlp<Scalar> backward(const Mlp<Scalar>& p, const ForwardCache<Scalar>& cache,
                     MatrixX<Scalar> dlogits) {
  Mlp<Scalar> grad = p.zeros_like();
  MatrixX<Scalar> delta = std::move(dlogits);
  for (int l = p.num_layers() - 1; l >= 0; --l) {
    grad.weights[l].noalias() = delta * cache.inputs[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    MatrixX<Scalar> up = p.weights[l].transpose() * delta;
    // inputs[l] is the rectified output of layer l-1.
    delta = (cache.inputs[l].array() > Scalar(0)).select(up, Scalar(0));
  }
  return grad;
}

// dLoss/dlogits from dLoss/dprobs through the softmax Jacobian.
template <typename Scalar>
MatrixX<Scalar> softmax_backward(const MatrixX<Scalar>& probs, const MatrixX<Scalar>& dprobs) {
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const Scalar dot = probs.col(j).dot(dprobs.col(j));
    out.col(j) = probs.col(j).cwiseProduct(dprobs.col(j) - VectorX<Scalar>::Constant(probs.rows(), dot));
  }
  return out;
}

// Samples for the abstraction likelihood. Column j of `cluster_weights`
// holds pi(a_j | c, k_j) for every cluster c.
template <typename Scalar>
struct LikelihoodBatch {
  MatrixX<Scalar> states;
  MatrixX<Scalar> cluster_weights;

  Eigen::Index size() const { return states.cols(); }

  template <typename Other>
  LikelihoodBatch<Other> cast() const {
    return {states.template cast<Other>(), cluster_weights.template cast<Other>()};
  }
};

template <typename Scalar>
struct NllResult {
  Scalar loss = 0;
  Mlp<Scalar> grad;
  int floor_hits = 0;
};

template <typename Scalar>
void check_batch(const Mlp<Scalar>& p, const LikelihoodBatch<Scalar>& batch) {
  if (batch.size() == 0) throw std::invalid_argument("likelihood batch is empty");
  if (batch.cluster_weights.cols() != batch.size() ||
      batch.cluster_weights.rows() != p.output_dim())
    throw DimensionMismatch("cluster weight matrix does not match network output");
}

// Mean negative log marginal likelihood of the batch actions:
//   -(1/B) sum_j log sum_c phi(c|s_j) pi(a_j|c,k_j).
// Marginals below kLogFloor are clamped and counted.
template <typename Scalar>
Scalar nll_loss(const Mlp<Scalar>& p, const LikelihoodBatch<Scalar>& batch,
                int* floor_hits = nullptr) {
  check_batch(p, batch);
  const MatrixX<Scalar> probs = forward_batch(p, batch.states).probs;
  const Scalar floor = static_cast<Scalar>(kLogFloor);
  Scalar total = 0;
  int hits = 0;
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    Scalar m = probs.col(j).dot(batch.cluster_weights.col(j));
    if (m < floor) {
      m = floor;
      ++hits;
    }
    total -= std::log(m);
  }
  if (floor_hits) *floor_hits = hits;
  return total / static_cast<Scalar>(batch.size());
}

template <typename Scalar>
NllResult<Scalar> nll_and_grad(const Mlp<Scalar>& p, const LikelihoodBatch<Scalar>& batch) {
  check_batch(p, batch);
  ForwardCache<Scalar> cache = forward_batch(p, batch.states);
  const Scalar floor = static_cast<Scalar>(kLogFloor);
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
  NllResult<Scalar> out;
  MatrixX<Scalar> dlogits(cache.probs.rows(), cache.probs.cols());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    const auto pj = cache.probs.col(j);
    const auto wj = batch.cluster_weights.col(j);
    Scalar m = pj.dot(wj);
    if (m < floor) {
      m = floor;
      ++out.floor_hits;
    }
    out.loss -= std::log(m);
    // d(-log m)/dz_c = phi_c (1 - w_c / m)
    dlogits.col(j) = inv_b * pj.cwiseProduct((Scalar(1) - wj.array() / m).matrix());
  }
  out.loss *= inv_b;
  out.grad = backward(p, cache, std::move(dlogits));
  return out;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> m, v;
  long t = 0;

  static AdamState for_params(const Mlp<Scalar>& p) {
    AdamState st;
    st.m = VectorX<Scalar>::Zero(p.parameter_count());
    st.v = VectorX<Scalar>::Zero(p.parameter_count());
    return st;
  }
};

// One bias-corrected Adam descent step on `p`.
template <typename Scalar>
void adam_step(Mlp<Scalar>& p, AdamState<Scalar>& st, const Mlp<Scalar>& grad,
               const AdamConfig& cfg = {}) {
  const VectorX<Scalar> g = grad.flatten();
  if (g.size() != p.parameter_count() || st.m.size() != g.size() || st.v.size() != g.size())
    throw DimensionMismatch("adam_step: shape mismatch between parameters, state and gradient");
  ++st.t;
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  st.m = b1 * st.m + (Scalar(1) - b1) * g;
  st.v = b2 * st.v + (Scalar(1) - b2) * g.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(st.t));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(st.t));
  const Scalar lr = static_cast<Scalar>(cfg.lr), eps = static_cast<Scalar>(cfg.eps);
  VectorX<Scalar> theta = p.flatten();
  theta.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
  p.unflatten(theta);
}

// Max over parameters of |analytic - central difference| / (|analytic| + 1e-8).
// The difference quotient is evaluated in long double.
template <typename Scalar>
double gradient_error(const Mlp<Scalar>& p, const LikelihoodBatch<Scalar>& batch,
                      const Mlp<Scalar>& analytic, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite difference step must be positive");
  using Wide = long double;
  const Mlp<Wide> wide = p.template cast<Wide>();
  const LikelihoodBatch<Wide> wbatch = batch.template cast<Wide>();
  const VectorX<Wide> theta = wide.flatten();
  const VectorX<Scalar> a = analytic.flatten();
  Mlp<Wide> probe = wide;
  double worst = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorX<Wide> t = theta;
    t(i) += static_cast<Wide>(h);
    probe.unflatten(t);
    const Wide up = nll_loss(probe, wbatch);
    t(i) = theta(i) - static_cast<Wide>(h);
    probe.unflatten(t);
    const Wide down = nll_loss(probe, wbatch);
    const double fd = static_cast<double>((up - down) / (Wide(2) * static_cast<Wide>(h)));
    const double ai = static_cast<double>(a(i));
    worst = std::max(worst, std::abs(ai - fd) / (std::abs(ai) + 1e-8));
  }
  return worst;
}

template <typename Scalar>
double finite_diff_check(const Mlp<Scalar>& p, const LikelihoodBatch<Scalar>& batch,
                         double h = 1e-5) {
  return gradient_error(p, batch, nll_and_grad(p, batch).grad, h);
}

}  // namespace alab

#endif  // ALAB_NET_HPP_
