#include "iaeilm/flow.hpp"

#include <string>

namespace iaeilm::flow {

template <class S>
FlowState<S> make_state(Matrix<S> x0, Matrix<S> z, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("flow state: t = " + std::to_string(t) + " outside [0, 1]");
  if (x0.rows() != z.rows() || x0.cols() != z.cols()) {
    throw ShapeError("flow state: x0 " + shape_str(x0) + " and z " + shape_str(z) + " differ");
  }
  return {std::move(x0), std::move(z), t, sigma_of(t)};
}

template <class S>
Matrix<S> forward_process(const FlowState<S>& s) {
  const S sigma = static_cast<S>(s.sigma);
  return ((S(1) - sigma) * s.x0.array() + sigma * s.z.array()).matrix();
}

template <class S>
Matrix<S> target_velocity(const FlowState<S>& s) {
  return s.z - s.x0;
}

template <class S>
double fm_loss(const Matrix<S>& pred, const FlowState<S>& s, Matrix<S>* d_pred) {
  expect_shape(pred, s.x0.rows(), s.x0.cols(), "fm_loss: prediction");
  const S sigma = static_cast<S>(s.sigma);
  const Matrix<S> residual = ((pred * -sigma + forward_process(s)) - s.x0);
  const double n = static_cast<double>(residual.size());
  if (d_pred) *d_pred = residual * static_cast<S>(-2.0 * s.sigma / n);
  return residual.template cast<double>().squaredNorm() / n;
}

template <class S>
Matrix<S> standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<S> z(rows, cols);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<S>(n(rng));
  return z;
}

double sample_t(std::mt19937_64& rng, double t_min) {
  std::uniform_real_distribution<double> u(t_min, 1.0);
  return u(rng);
}

template <class S>
Matrix<S> integrate(const VelocityField<S>& v, Matrix<S> z, int steps) {
  if (steps < 1) throw DomainError("sampler: steps must be >= 1");
  Matrix<S> x = std::move(z);
  for (int k = 0; k < steps; ++k) {
    const double sigma = 1.0 - static_cast<double>(k) / steps;
    const double next = 1.0 - static_cast<double>(k + 1) / steps;
    const Matrix<S> vel = v(x, sigma);
    x += static_cast<S>(next - sigma) * vel;
  }
  return x;
}

template <class S>
Matrix<S> sample(const VelocityField<S>& v, Index frames, Index width, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return integrate(v, standard_normal<S>(frames, width, rng), steps);
}

#define IAEILM_INSTANTIATE(S)                                                                     \
  template FlowState<S> make_state<S>(Matrix<S>, Matrix<S>, double);                              \
  template Matrix<S> forward_process<S>(const FlowState<S>&);                                     \
  template Matrix<S> target_velocity<S>(const FlowState<S>&);                                     \
  template double fm_loss<S>(const Matrix<S>&, const FlowState<S>&, Matrix<S>*);                  \
  template Matrix<S> standard_normal<S>(Index, Index, std::mt19937_64&);                          \
  template Matrix<S> integrate<S>(const VelocityField<S>&, Matrix<S>, int);                       \
  template Matrix<S> sample<S>(const VelocityField<S>&, Index, Index, int, std::uint64_t);

IAEILM_INSTANTIATE(float)
IAEILM_INSTANTIATE(double)
#undef IAEILM_INSTANTIATE

}  // namespace iaeilm::flow
