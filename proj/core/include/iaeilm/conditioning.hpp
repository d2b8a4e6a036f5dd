#pragma once

// Melody injection operators acting on a (T x D) hidden state.
//
//   iacr        c = tanh(h W_h + b_h) * tanh(m W_m + b_m)            (T x M)
//   eilm        h * gamma + beta,        [gamma | beta] = c F + b     (T x D each)
//   eilm_zero   h * (gamma + 1) + beta   (identity when F, b are zero)
//   film        one (gamma, beta) row broadcast over all frames
//   ea          h + c F + b
//
// All operators have explicit backward passes that accumulate into weight
// gradients of the same structure as the weights.

#include "iaeilm/common.hpp"
#include "iaeilm/nn.hpp"

#include <random>

namespace iaeilm::cond {

/// Refinement layers: hidden state D -> M and melody M -> M.
template <class S>
struct IacrWeights {
  nn::Linear<S> from_hidden;
  nn::Linear<S> from_melody;

  static IacrWeights zeros(Index hidden_width, Index melody_width);
  static IacrWeights xavier(Index hidden_width, Index melody_width, std::mt19937_64& rng);
};

/// Linear map applied per frame. For modulation it produces 2D columns laid out
/// as [gamma | beta]; for element-wise addition it produces D columns.
template <class S>
using ProjectorWeights = nn::Linear<S>;

template <class S>
struct RefinedCondition {
  Matrix<S> values;  // T x M, every entry in (-1, 1)
};

template <class S>
struct ModulationParams {
  Matrix<S> gamma;  // T x D (or 1 x D for feature-wise modulation)
  Matrix<S> beta;
};

template <class S>
struct IacrCache {
  Matrix<S> tanh_hidden;
  Matrix<S> tanh_melody;
};

template <class S>
RefinedCondition<S> iacr(const Matrix<S>& m, const Matrix<S>& h, const IacrWeights<S>& w,
                         IacrCache<S>* cache = nullptr);

/// Accumulates weight gradients; adds dL/dm into `dm` and dL/dh into `dh`.
template <class S>
void iacr_backward(const Matrix<S>& m, const Matrix<S>& h, const IacrWeights<S>& w,
                   const IacrCache<S>& cache, const Matrix<S>& dc, IacrWeights<S>& grad,
                   Matrix<S>& dm, Matrix<S>& dh);

/// Splits f(c) into (gamma, beta). `f` must have an even number of output columns.
template <class S>
ModulationParams<S> modulation_params(const Matrix<S>& c, const ProjectorWeights<S>& f);

/// Modulation computed from the melody feature alone, without hidden-state access.
template <class S>
ModulationParams<S> static_condition(const Matrix<S>& m, const ProjectorWeights<S>& f);

/// gamma * h + beta. A single-row (gamma, beta) is broadcast over frames.
template <class S>
Matrix<S> modulate(const Matrix<S>& h, const ModulationParams<S>& p);

/// (gamma + 1) * h + beta, broadcasting a single-row (gamma, beta).
template <class S>
Matrix<S> modulate_zero(const Matrix<S>& h, const ModulationParams<S>& p);

/// Backward of modulate / modulate_zero. Returns dL/dh; fills dgamma, dbeta with
/// the same row count as p (summed over frames for a broadcast row).
template <class S>
Matrix<S> modulate_backward(const Matrix<S>& h, const ModulationParams<S>& p,
                            const Matrix<S>& dout, bool plus_one, ModulationParams<S>& dparams);

template <class S>
Matrix<S> eilm(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f);

template <class S>
Matrix<S> eilm_zero(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f);

/// Feature-wise baseline in zero-init form; `pooled` is the (1 x M) time-mean of the condition.
template <class S>
Matrix<S> film_baseline(const Matrix<S>& h, const Matrix<S>& pooled, const ProjectorWeights<S>& f);

/// Element-wise addition baseline; `f` maps M -> D.
template <class S>
Matrix<S> ea_baseline(const Matrix<S>& h, const RefinedCondition<S>& c, const ProjectorWeights<S>& f);

/// Row mean over frames: (T x M) -> (1 x M).
template <class S>
Matrix<S> time_mean(const Matrix<S>& c);

}  // namespace iaeilm::cond
