#pragma once

// fp64 central finite-difference checks of the analytic backward passes.

#include "iaeilm/backbone.hpp"
#include "iaeilm/denoiser.hpp"
#include "iaeilm/nn.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace iaeilm::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kFullTolerance = 1e-3;
inline constexpr double kCompositeTolerance = 1e-4;
/// Gradient norms below this are compared absolutely (both sides are FD noise).
inline constexpr double kAbsFloor = 1e-7;

struct ParamResult {
  std::string name;
  nn::ParamGroup group = nn::ParamGroup::backbone;
  std::size_t entries = 0;
  double analytic_norm = 0.0;
  double rel_error = 0.0;  // ||a - n|| / max(||a||, ||n||, kAbsFloor)
  bool pass = false;
};

struct SuiteResult {
  std::string suite;
  double tolerance = 0.0;
  std::vector<ParamResult> params;

  bool pass() const;
  double max_rel_error() const;
  /// Largest relative error among tensors of `group`.
  double max_rel_error(nn::ParamGroup group) const;
};

/// Compares `grads[i]` against central differences of `loss` w.r.t. `params[i]`.
/// `params` are perturbed in place and restored.
SuiteResult check(const std::string& suite, const std::vector<nn::ParamRef<double>>& params,
                  const std::vector<nn::ParamRef<double>>& grads, const std::function<double()>& loss,
                  double tolerance, double step = kStep);

/// T = 6 latent frames, 5 melody frames, D = 8, two heads, two blocks.
backbone::BackboneConfig tiny_config(backbone::Injector injector, backbone::Placement placement);

/// Replaces every parameter with U(-scale, scale) draws (zero-init layers included).
void randomize(Denoiser<double>& d, std::uint64_t seed, double scale = 0.5);

/// Applied to the analytic gradient before comparison; used to plant a deliberate
/// error as a negative control.
using GradientHook = std::function<void(Denoiser<double>& grad)>;

/// Full flow-matching loss of one fixed tiny sample, checked for every parameter.
SuiteResult check_full_loss(const std::string& suite, Denoiser<double> model, std::uint64_t seed,
                            const GradientHook& corrupt = {});

/// Loss sum(W * eilm_zero(h, iacr(m, h), F)) with random W; checks the IACR and
/// projector weights plus the inputs h and m.
SuiteResult check_iacr_eilm(std::uint64_t seed, bool zero_projector = false);

/// Every injector x placement, zero-initialized and randomized, plus the composite.
std::vector<SuiteResult> run_all(std::uint64_t seed = 7);

void print(std::ostream& os, const SuiteResult& r, bool verbose = false);

}  // namespace iaeilm::gradcheck
