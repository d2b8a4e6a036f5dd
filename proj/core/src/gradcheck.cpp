#include "iaeilm/gradcheck.hpp"

#include "iaeilm/conditioning.hpp"
#include "iaeilm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace iaeilm::gradcheck {

bool SuiteResult::pass() const {
  return std::all_of(params.begin(), params.end(), [](const ParamResult& p) { return p.pass; });
}

double SuiteResult::max_rel_error() const {
  double e = 0.0;
  for (const auto& p : params) e = std::max(e, p.rel_error);
  return e;
}

double SuiteResult::max_rel_error(nn::ParamGroup group) const {
  double e = 0.0;
  for (const auto& p : params) {
    if (p.group == group) e = std::max(e, p.rel_error);
  }
  return e;
}

SuiteResult check(const std::string& suite, const std::vector<nn::ParamRef<double>>& params,
                  const std::vector<nn::ParamRef<double>>& grads, const std::function<double()>& loss,
                  double tolerance, double step) {
  if (params.size() != grads.size()) throw ShapeError("gradcheck: parameter and gradient lists differ");
  SuiteResult r{suite, tolerance, {}};
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix<double>& w = *params[k].value;
    const Matrix<double>& g = *grads[k].value;
    expect_shape(g, w.rows(), w.cols(), "gradcheck: gradient");
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + step;
      const double lp = loss();
      w.data()[i] = orig - step;
      const double lm = loss();
      w.data()[i] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double analytic = g.data()[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    ParamResult p;
    p.name = params[k].name;
    p.group = params[k].group;
    p.entries = static_cast<std::size_t>(w.size());
    p.analytic_norm = std::sqrt(a2);
    p.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), kAbsFloor});
    p.pass = std::isfinite(p.rel_error) && p.rel_error < tolerance;
    r.params.push_back(std::move(p));
  }
  return r;
}

backbone::BackboneConfig tiny_config(backbone::Injector injector, backbone::Placement placement) {
  backbone::BackboneConfig c;
  c.num_blocks = 2;
  c.model_width = 8;
  c.heads = 2;
  c.ffn_mult = 2;
  c.injector = injector;
  c.placement = placement;
  c.melody_width = 4;
  c.latent_dim = 6;
  c.num_styles = 3;
  c.positional = true;
  c.encoder.hidden_channels = {5};
  c.encoder.kernel = 3;
  c.encoder.activation = melody::Activation::tanh;
  c.encoder.first_layer_scale = 1.0;
  return c;
}

void randomize(Denoiser<double>& d, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : d.parameters()) {
    for (Index i = 0; i < p.value->size(); ++i) p.value->data()[i] = u(rng);
  }
}

namespace {

struct TinySample {
  flow::FlowState<double> state;
  melody::PitchFeature feat;
  int style = 1;
};

TinySample tiny_sample(const backbone::BackboneConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr Index kFrames = 6;
  melody::PitchSequence p;
  p.f0_hz = {220.0, 0.0, 246.9, 261.6, 0.0};  // 5 frames, so the interpolation path is exercised
  TinySample s;
  s.feat = melody::extract_pitch_features(p);
  auto x0 = flow::standard_normal<double>(kFrames, cfg.latent_dim, rng);
  auto z = flow::standard_normal<double>(kFrames, cfg.latent_dim, rng);
  s.state = flow::make_state(std::move(x0), std::move(z), 0.37);
  s.style = 1 % cfg.num_styles;
  return s;
}

}  // namespace

SuiteResult check_full_loss(const std::string& suite, Denoiser<double> model, std::uint64_t seed,
                            const GradientHook& corrupt) {
  const TinySample s = tiny_sample(model.cfg, seed);
  Denoiser<double> grad = model.zeros_like();
  model.loss_and_grad(s.state, s.style, s.feat, true, grad);
  if (corrupt) corrupt(grad);
  return check(suite, model.parameters(), grad.parameters(),
               [&] { return model.loss(s.state, s.style, s.feat, true); }, kFullTolerance);
}

SuiteResult check_iacr_eilm(std::uint64_t seed, bool zero_projector) {
  constexpr Index kT = 6, kD = 8, kM = 4;
  std::mt19937_64 rng(seed);
  auto h = flow::standard_normal<double>(kT, kD, rng);
  auto m = flow::standard_normal<double>(kT, kM, rng);
  auto readout = flow::standard_normal<double>(kT, kD, rng);
  auto w = cond::IacrWeights<double>::xavier(kD, kM, rng);
  auto f = zero_projector ? nn::linear_zeros<double>(kM, 2 * kD) : nn::linear_xavier<double>(kM, 2 * kD, rng);
  if (!zero_projector) {
    // Nonzero biases so every bias gradient path is live.
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto* b : {&w.from_hidden.bias, &w.from_melody.bias, &f.bias}) {
      for (Index i = 0; i < b->size(); ++i) b->data()[i] = u(rng);
    }
  }

  auto loss = [&] {
    const auto c = cond::iacr(m, h, w);
    return nn::dot(readout, cond::eilm_zero(h, c, f));
  };

  // Analytic pass.
  cond::IacrCache<double> cache;
  const auto c = cond::iacr(m, h, w, &cache);
  const auto params = cond::modulation_params(c.values, f);
  cond::ModulationParams<double> dparams;
  Matrix<double> dh = cond::modulate_backward(h, params, readout, true, dparams);
  Matrix<double> dcat(kT, 2 * kD);
  dcat << dparams.gamma, dparams.beta;
  nn::Linear<double> df = nn::linear_zeros<double>(kM, 2 * kD);
  const Matrix<double> dc = nn::linear_backward(c.values, f, dcat, df);
  cond::IacrWeights<double> dw = cond::IacrWeights<double>::zeros(kD, kM);
  Matrix<double> dm = Matrix<double>::Zero(kT, kM);
  cond::iacr_backward(m, h, w, cache, dc, dw, dm, dh);

  std::vector<nn::ParamRef<double>> ps, gs;
  w.from_hidden.collect("iacr.from_hidden", nn::ParamGroup::injector, ps);
  w.from_melody.collect("iacr.from_melody", nn::ParamGroup::injector, ps);
  f.collect("proj", nn::ParamGroup::injector, ps);
  ps.push_back({"input.h", {}, nn::ParamGroup::backbone, &h});
  ps.push_back({"input.m", {}, nn::ParamGroup::injector, &m});
  dw.from_hidden.collect("iacr.from_hidden", nn::ParamGroup::injector, gs);
  dw.from_melody.collect("iacr.from_melody", nn::ParamGroup::injector, gs);
  df.collect("proj", nn::ParamGroup::injector, gs);
  gs.push_back({"input.h", {}, nn::ParamGroup::backbone, &dh});
  gs.push_back({"input.m", {}, nn::ParamGroup::injector, &dm});
  return check(zero_projector ? "iacr_eilm_zero/zero-projector" : "iacr_eilm_zero/random", ps, gs, loss,
               kCompositeTolerance);
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  using backbone::Injector;
  using backbone::Placement;
  std::vector<SuiteResult> out;
  for (auto inj : {Injector::ia_eilm, Injector::eilm_static, Injector::ea, Injector::film, Injector::none}) {
    for (auto pl : {Placement::before_ffn, Placement::before_attn}) {
      if (inj == Injector::none && pl == Placement::before_attn) continue;
      const auto cfg = tiny_config(inj, pl);
      const std::string base = "full/" + std::string(backbone::to_string(inj)) + "/" +
                               std::string(backbone::to_string(pl));
      auto model = Denoiser<double>::init(cfg, seed);
      out.push_back(check_full_loss(base + "/zero-init", model, seed));
      randomize(model, derive_seed(seed, 1));
      out.push_back(check_full_loss(base + "/random", model, seed));
    }
  }
  {
    auto cfg = tiny_config(Injector::ia_eilm, Placement::before_ffn);
    cfg.encoder.activation = melody::Activation::sine;
    cfg.encoder.first_layer_scale = 3.0;
    auto model = Denoiser<double>::init(cfg, seed);
    randomize(model, derive_seed(seed, 2));
    out.push_back(check_full_loss("full/IA_EILM/BEFORE_FFN/sine-encoder/random", model, seed));
  }
  out.push_back(check_iacr_eilm(seed, false));
  out.push_back(check_iacr_eilm(seed, true));
  return out;
}

void print(std::ostream& os, const SuiteResult& r, bool verbose) {
  os << (r.pass() ? "PASS " : "FAIL ") << r.suite << "  max_rel=" << std::scientific << std::setprecision(2)
     << r.max_rel_error() << " (tol " << r.tolerance << ")\n";
  for (const auto& p : r.params) {
    if (!verbose && p.pass) continue;
    os << "    " << (p.pass ? "ok   " : "BAD  ") << p.name << "  rel=" << p.rel_error << "  |g|=" << p.analytic_norm
       << "\n";
  }
  os << std::defaultfloat;
}

}  // namespace iaeilm::gradcheck
