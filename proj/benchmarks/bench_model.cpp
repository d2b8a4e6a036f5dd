// Per-sample costs at the default model size.

#include "iaeilm/config.hpp"
#include "iaeilm/conditioning.hpp"
#include "iaeilm/denoiser.hpp"
#include "iaeilm/flow.hpp"
#include "iaeilm/metrics.hpp"
#include "iaeilm/synthworld.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace iaeilm;

namespace {

struct Fixture {
  TrainConfig cfg = default_train_config();
  Denoiser<float> model;
  synth::SynthSample sample;
  melody::PitchFeature feat;
  flow::FlowState<float> state;

  explicit Fixture(backbone::Injector inj) {
    cfg.backbone.injector = inj;
    model = Denoiser<float>::init(cfg.backbone, 1);
    sample = synth::random_sample(cfg.data.synth, 2);
    feat = melody::extract_pitch_features(sample.pitch);
    std::mt19937_64 rng(3);
    auto z = flow::standard_normal<float>(sample.x0.rows(), sample.x0.cols(), rng);
    state = flow::make_state(sample.x0, std::move(z), 0.4);
  }
};

backbone::Injector injector_arg(const benchmark::State& s) { return static_cast<backbone::Injector>(s.range(0)); }

void BM_Velocity(benchmark::State& s) {
  Fixture f(injector_arg(s));
  const auto m = f.model.melody_feature(f.feat, f.sample.x0.rows());
  for (auto _ : s) benchmark::DoNotOptimize(f.model.velocity(f.state.x0, 0.4, f.sample.style_id, m));
  s.SetLabel(std::string(backbone::to_string(f.cfg.backbone.injector)));
}

void BM_LossAndGrad(benchmark::State& s) {
  Fixture f(injector_arg(s));
  auto grad = f.model.zeros_like();
  for (auto _ : s) benchmark::DoNotOptimize(f.model.loss_and_grad(f.state, f.sample.style_id, f.feat, true, grad));
  s.SetLabel(std::string(backbone::to_string(f.cfg.backbone.injector)));
}

void BM_SampleLatent(benchmark::State& s) {
  Fixture f(backbone::Injector::ia_eilm);
  const auto m = f.model.melody_feature(f.feat, f.sample.x0.rows());
  const flow::VelocityField<float> v = [&](const Matrix<float>& x, double t) {
    return f.model.velocity(x, t, f.sample.style_id, m);
  };
  std::uint64_t seed = 0;
  for (auto _ : s) benchmark::DoNotOptimize(flow::sample(v, f.sample.x0.rows(), f.sample.x0.cols(), f.cfg.sample_steps, seed++));
}

void BM_IacrEilm(benchmark::State& s) {
  std::mt19937_64 rng(4);
  const Index T = 128, D = 128, M = 64;
  const auto h = flow::standard_normal<float>(T, D, rng);
  const auto m = flow::standard_normal<float>(T, M, rng);
  const auto w = cond::IacrWeights<float>::xavier(D, M, rng);
  const auto proj = nn::linear_xavier<float>(M, 2 * D, rng);
  for (auto _ : s) benchmark::DoNotOptimize(cond::eilm_zero(h, cond::iacr(m, h, w), proj));
}

void BM_Metrics(benchmark::State& s) {
  const auto cfg = default_train_config().data.synth;
  const auto a = synth::random_sample(cfg, 5), b = synth::random_sample(cfg, 6);
  for (auto _ : s) benchmark::DoNotOptimize(metrics::report_pair(a.pitch, b.pitch));
}

void injectors(benchmark::internal::Benchmark* b) {
  for (auto inj : {backbone::Injector::none, backbone::Injector::ea, backbone::Injector::eilm_static, backbone::Injector::ia_eilm})
    b->Arg(static_cast<int>(inj));
}

}  // namespace

BENCHMARK(BM_Velocity)->Apply(injectors)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossAndGrad)->Apply(injectors)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleLatent)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IacrEilm)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Metrics)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
