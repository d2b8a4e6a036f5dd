#pragma once

// Linear-path flow matching: x_t = (1 - sigma) x0 + sigma z, sigma = t.

#include "iaeilm/common.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace iaeilm::flow {

inline constexpr double kDefaultTMin = 1e-3;

/// Identity schedule. Monotone with sigma(0) = 0 and sigma(1) = 1.
inline double sigma_of(double t) { return t; }

template <class S>
struct FlowState {
  Matrix<S> x0;
  Matrix<S> z;
  double t = 0.0;
  double sigma = 0.0;
};

/// Builds a state with sigma = sigma_of(t). Throws DomainError when t is outside [0, 1].
template <class S>
FlowState<S> make_state(Matrix<S> x0, Matrix<S> z, double t);

template <class S>
Matrix<S> forward_process(const FlowState<S>& s);

/// Mean over elements of ((pred * -sigma + x_t) - x0)^2. When `d_pred` is given it
/// receives dLoss/dpred.
template <class S>
double fm_loss(const Matrix<S>& pred, const FlowState<S>& s, Matrix<S>* d_pred = nullptr);

/// Regression target z - x0 (the velocity of the linear path).
template <class S>
Matrix<S> target_velocity(const FlowState<S>& s);

template <class S>
Matrix<S> standard_normal(Index rows, Index cols, std::mt19937_64& rng);

/// t ~ U[t_min, 1].
double sample_t(std::mt19937_64& rng, double t_min = kDefaultTMin);

/// Velocity model: (x_sigma, sigma) -> predicted z - x0.
template <class S>
using VelocityField = std::function<Matrix<S>(const Matrix<S>&, double)>;

/// Euler integration from sigma = 1 (x = z) to sigma = 0 on a uniform grid.
template <class S>
Matrix<S> integrate(const VelocityField<S>& v, Matrix<S> z, int steps);

/// Draws z ~ N(0, I) from `seed` and integrates it to sigma = 0.
template <class S>
Matrix<S> sample(const VelocityField<S>& v, Index frames, Index width, int steps, std::uint64_t seed);

}  // namespace iaeilm::flow
