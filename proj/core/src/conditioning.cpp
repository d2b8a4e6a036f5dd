#include "iaeilm/conditioning.hpp"

namespace iaeilm::cond {

template <class S>
IacrWeights<S> IacrWeights<S>::zeros(Index hidden_width, Index melody_width) {
  return {nn::linear_zeros<S>(hidden_width, melody_width),
          nn::linear_zeros<S>(melody_width, melody_width)};
}

template <class S>
IacrWeights<S> IacrWeights<S>::xavier(Index hidden_width, Index melody_width, std::mt19937_64& rng) {
  IacrWeights w;
  w.from_hidden = nn::linear_xavier<S>(hidden_width, melody_width, rng);
  w.from_melody = nn::linear_xavier<S>(melody_width, melody_width, rng);
  return w;
}

template <class S>
RefinedCondition<S> iacr(const Matrix<S>& m, const Matrix<S>& h, const IacrWeights<S>& w,
                         IacrCache<S>* cache) {
  if (m.rows() != h.rows()) {
    throw ShapeError("iacr: melody has " + std::to_string(m.rows()) + " frames, hidden state has " +
                     std::to_string(h.rows()));
  }
  Matrix<S> th = nn::linear(h, w.from_hidden).array().tanh().matrix();
  Matrix<S> tm = nn::linear(m, w.from_melody).array().tanh().matrix();
  if (th.cols() != tm.cols()) {
    throw ShapeError("iacr: refinement widths differ: " + shape_str(th) + " vs " + shape_str(tm));
  }
  RefinedCondition<S> c{(th.array() * tm.array()).matrix()};
  if (cache) {
    cache->tanh_hidden = std::move(th);
    cache->tanh_melody = std::move(tm);
  }
  return c;
}

template <class S>
void iacr_backward(const Matrix<S>& m, const Matrix<S>& h, const IacrWeights<S>& w,
                   const IacrCache<S>& cache, const Matrix<S>& dc, IacrWeights<S>& grad,
                   Matrix<S>& dm, Matrix<S>& dh) {
  const auto th = cache.tanh_hidden.array();
  const auto tm = cache.tanh_melody.array();
  const Matrix<S> d_hidden_pre = (dc.array() * tm * (S(1) - th.square())).matrix();
  const Matrix<S> d_melody_pre = (dc.array() * th * (S(1) - tm.square())).matrix();
  dh += nn::linear_backward(h, w.from_hidden, d_hidden_pre, grad.from_hidden);
  dm += nn::linear_backward(m, w.from_melody, d_melody_pre, grad.from_melody);
}

template <class S>
ModulationParams<S> modulation_params(const Matrix<S>& c, const ProjectorWeights<S>& f) {
  if (f.out() % 2 != 0) {
    throw ShapeError("modulation projector must produce [gamma | beta], got " +
                     std::to_string(f.out()) + " columns");
  }
  const Matrix<S> gb = nn::linear(c, f);
  const Index d = f.out() / 2;
  return {gb.leftCols(d), gb.rightCols(d)};
}

template <class S>
ModulationParams<S> static_condition(const Matrix<S>& m, const ProjectorWeights<S>& f) {
  return modulation_params(m, f);
}

namespace {

template <class S>
void check_modulation_shape(const Matrix<S>& h, const ModulationParams<S>& p, const char* what) {
  const bool rows_ok = p.gamma.rows() == h.rows() || p.gamma.rows() == 1;
  if (!rows_ok || p.gamma.cols() != h.cols() || p.beta.rows() != p.gamma.rows() ||
      p.beta.cols() != h.cols()) {
    throw ShapeError(std::string(what) + ": modulation " + shape_str(p.gamma) + "/" +
                     shape_str(p.beta) + " does not match hidden state " + shape_str(h));
  }
}

template <class S>
Matrix<S> affine(const Matrix<S>& h, const ModulationParams<S>& p, S offset) {
  if (p.gamma.rows() == 1 && h.rows() != 1) {
    Matrix<S> out = h;
    const auto g = (p.gamma.row(0).array() + offset).eval();
    for (Index t = 0; t < h.rows(); ++t) {
      out.row(t) = (h.row(t).array() * g + p.beta.row(0).array()).matrix();
    }
    return out;
  }
  return (h.array() * (p.gamma.array() + offset) + p.beta.array()).matrix();
}

}  // namespace

template <class S>
Matrix<S> modulate(const Matrix<S>& h, const ModulationParams<S>& p) {
  check_modulation_shape(h, p, "eilm");
  return affine(h, p, S(0));
}

template <class S>
Matrix<S> modulate_zero(const Matrix<S>& h, const ModulationParams<S>& p) {
  check_modulation_shape(h, p, "eilm_zero");
  return affine(h, p, S(1));
}

template <class S>
Matrix<S> modulate_backward(const Matrix<S>& h, const ModulationParams<S>& p,
                            const Matrix<S>& dout, bool plus_one, ModulationParams<S>& dparams) {
  const S offset = plus_one ? S(1) : S(0);
  if (p.gamma.rows() == 1 && h.rows() != 1) {
    Matrix<S> dh(h.rows(), h.cols());
    const auto g = (p.gamma.row(0).array() + offset).eval();
    for (Index t = 0; t < h.rows(); ++t) dh.row(t) = (dout.row(t).array() * g).matrix();
    dparams.gamma = (dout.array() * h.array()).colwise().sum().matrix();
    dparams.beta = dout.colwise().sum();
    return dh;
  }
  dparams.gamma = (dout.array() * h.array()).matrix();
  dparams.beta = dout;
  return (dout.array() * (p.gamma.array() + offset)).matrix();
}

template <class S>
Matrix<S> eilm(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f) {
  if (c.values.rows() != h.rows()) throw ShapeError("eilm: condition and hidden state differ in length");
  return modulate(h, modulation_params(c.values, f));
}

template <class S>
Matrix<S> eilm_zero(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f) {
  if (c.values.rows() != h.rows()) {
    throw ShapeError("eilm_zero: condition and hidden state differ in length");
  }
  return modulate_zero(h, modulation_params(c.values, f));
}

template <class S>
Matrix<S> time_mean(const Matrix<S>& c) {
  return c.colwise().mean();
}

template <class S>
Matrix<S> film_baseline(const Matrix<S>& h, const Matrix<S>& pooled, const ProjectorWeights<S>& f) {
  expect_shape(pooled, 1, f.in(), "film_baseline: pooled condition");
  return modulate_zero(h, modulation_params(pooled, f));
}

template <class S>
Matrix<S> ea_baseline(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f) {
  if (c.values.rows() != h.rows()) throw ShapeError("ea_baseline: condition and hidden state differ in length");
  if (f.out() != h.cols()) {
    throw ShapeError("ea_baseline: projector width " + std::to_string(f.out()) +
                     " does not match hidden width " + std::to_string(h.cols()));
  }
  return h + nn::linear(c.values, f);
}

#define IAEILM_INSTANTIATE(S)                                                                      \
  template struct IacrWeights<S>;                                                                  \
  template RefinedCondition<S> iacr<S>(const Matrix<S>&, const Matrix<S>&, const IacrWeights<S>&, \
                                       IacrCache<S>*);                                             \
  template void iacr_backward<S>(const Matrix<S>&, const Matrix<S>&, const IacrWeights<S>&,       \
                                 const IacrCache<S>&, const Matrix<S>&, IacrWeights<S>&,           \
                                 Matrix<S>&, Matrix<S>&);                                          \
  template ModulationParams<S> modulation_params<S>(const Matrix<S>&, const ProjectorWeights<S>&); \
  template ModulationParams<S> static_condition<S>(const Matrix<S>&, const ProjectorWeights<S>&);  \
  template Matrix<S> modulate<S>(const Matrix<S>&, const ModulationParams<S>&);                    \
  template Matrix<S> modulate_zero<S>(const Matrix<S>&, const ModulationParams<S>&);               \
  template Matrix<S> modulate_backward<S>(const Matrix<S>&, const ModulationParams<S>&,            \
                                          const Matrix<S>&, bool, ModulationParams<S>&);           \
  template Matrix<S> eilm<S>(const Matrix<S>&, const RefinedCondition<S>&,                         \
                             const ProjectorWeights<S>&);                                          \
  template Matrix<S> eilm_zero<S>(const Matrix<S>&, const RefinedCondition<S>&,                    \
                                  const ProjectorWeights<S>&);                                     \
  template Matrix<S> film_baseline<S>(const Matrix<S>&, const Matrix<S>&,                          \
                                      const ProjectorWeights<S>&);                                 \
  template Matrix<S> ea_baseline<S>(const Matrix<S>&, const RefinedCondition<S>&,                  \
                                    const ProjectorWeights<S>&);                                   \
  template Matrix<S> time_mean<S>(const Matrix<S>&);

IAEILM_INSTANTIATE(float)
IAEILM_INSTANTIATE(double)
#undef IAEILM_INSTANTIATE

}  // namespace iaeilm::cond
