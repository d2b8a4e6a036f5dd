#pragma once

// Small dense building blocks with explicit backward passes. Every layer keeps
// weights and gradients in structurally identical objects so a gradient buffer
// is just a zero-filled copy of the weights.

#include "iaeilm/common.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace iaeilm::nn {

/// Parameters that belong to the base generator versus the melody-control path
/// (melody encoder, refinement layers, modulation projectors).
enum class ParamGroup : std::uint8_t { backbone, injector };

template <class S>
struct ParamRef {
  std::string name;
  std::vector<std::uint32_t> dims;
  ParamGroup group;
  Matrix<S>* value;
};

template <class S>
struct Linear {
  Matrix<S> weight;  // in x out
  Matrix<S> bias;    // 1 x out

  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }

  void collect(const std::string& prefix, ParamGroup group, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".weight",
                   {static_cast<std::uint32_t>(weight.rows()), static_cast<std::uint32_t>(weight.cols())},
                   group,
                   &weight});
    out.push_back({prefix + ".bias", {static_cast<std::uint32_t>(bias.cols())}, group, &bias});
  }
};

template <class S>
Linear<S> linear_zeros(Index in, Index out) {
  return {Matrix<S>::Zero(in, out), Matrix<S>::Zero(1, out)};
}

/// Xavier-uniform weights, zero bias.
template <class S>
Linear<S> linear_xavier(Index in, Index out, std::mt19937_64& rng, double gain = 1.0) {
  Linear<S> l = linear_zeros<S>(in, out);
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<S>(u(rng));
  return l;
}

template <class S>
Linear<S> linear_normal(Index in, Index out, std::mt19937_64& rng, double stddev) {
  Linear<S> l = linear_zeros<S>(in, out);
  std::normal_distribution<double> n(0.0, stddev);
  for (Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<S>(n(rng));
  return l;
}

/// y = x W + b, applied per row.
template <class S>
Matrix<S> linear(const Matrix<S>& x, const Linear<S>& l) {
  if (x.cols() != l.in()) {
    throw ShapeError("linear: input " + shape_str(x) + " does not match weight " +
                     shape_str(l.weight));
  }
  Matrix<S> y(x.rows(), l.out());
  y.noalias() = x * l.weight;
  y.rowwise() += l.bias.row(0);
  return y;
}

/// Accumulates dW, db into `grad` and returns dx.
template <class S>
Matrix<S> linear_backward(const Matrix<S>& x, const Linear<S>& l, const Matrix<S>& dy,
                          Linear<S>& grad) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias.row(0) += dy.colwise().sum();
  Matrix<S> dx(x.rows(), l.in());
  dx.noalias() = dy * l.weight.transpose();
  return dx;
}

/// Same as linear_backward but skips dx.
template <class S>
void linear_backward_params(const Matrix<S>& x, const Matrix<S>& dy, Linear<S>& grad) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias.row(0) += dy.colwise().sum();
}

// Pointwise nonlinearities ---------------------------------------------------

template <class S>
Matrix<S> silu(const Matrix<S>& x) {
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <class S>
Matrix<S> silu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  auto sig = (S(1) / (S(1) + (-x.array()).exp())).eval();
  return (dy.array() * sig * (S(1) + x.array() * (S(1) - sig))).matrix();
}

/// Tanh-approximated GELU.
template <class S>
Matrix<S> gelu(const Matrix<S>& x) {
  const S k = S(0.7978845608028654);  // sqrt(2/pi)
  auto a = x.array();
  return (S(0.5) * a * (S(1) + (k * (a + S(0.044715) * a.cube())).tanh())).matrix();
}

template <class S>
Matrix<S> gelu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  const S k = S(0.7978845608028654);
  auto a = x.array();
  auto th = (k * (a + S(0.044715) * a.cube())).tanh().eval();
  auto dinner = (k * (S(1) + S(3) * S(0.044715) * a.square())).eval();
  auto d = (S(0.5) * (S(1) + th) + S(0.5) * a * (S(1) - th.square()) * dinner).eval();
  return (dy.array() * d).matrix();
}

// Layer normalization without affine parameters ------------------------------

template <class S>
struct LayerNormCache {
  Matrix<S> normalized;
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
};

template <class S>
Matrix<S> layer_norm(const Matrix<S>& x, LayerNormCache<S>& cache, S eps = S(1e-6)) {
  const Index n = x.rows();
  const S inv_d = S(1) / static_cast<S>(x.cols());
  cache.normalized.resize(n, x.cols());
  cache.inv_std.resize(n);
  for (Index r = 0; r < n; ++r) {
    const S mean = x.row(r).sum() * inv_d;
    auto centered = (x.row(r).array() - mean).eval();
    const S var = centered.square().sum() * inv_d;
    const S inv = S(1) / std::sqrt(var + eps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = centered * inv;
  }
  return cache.normalized;
}

template <class S>
Matrix<S> layer_norm_backward(const LayerNormCache<S>& cache, const Matrix<S>& dy) {
  const Index n = dy.rows();
  const S inv_d = S(1) / static_cast<S>(dy.cols());
  Matrix<S> dx(n, dy.cols());
  for (Index r = 0; r < n; ++r) {
    const auto xh = cache.normalized.row(r).array();
    const auto g = dy.row(r).array();
    const S mean_g = g.sum() * inv_d;
    const S mean_gx = (g * xh).sum() * inv_d;
    dx.row(r) = cache.inv_std(r) * (g - mean_g - xh * mean_gx);
  }
  return dx;
}

/// Row-wise softmax, in place.
template <class S>
void softmax_rows(Matrix<S>& x) {
  for (Index r = 0; r < x.rows(); ++r) {
    const S mx = x.row(r).maxCoeff();
    x.row(r) = (x.row(r).array() - mx).exp();
    x.row(r) /= x.row(r).sum();
  }
}

/// Frobenius dot product, accumulated in double.
template <class S>
double dot(const Matrix<S>& a, const Matrix<S>& b) {
  return (a.template cast<double>().array() * b.template cast<double>().array()).sum();
}

}  // namespace iaeilm::nn
