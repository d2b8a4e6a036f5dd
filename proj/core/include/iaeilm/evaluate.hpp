#pragma once

// sample -> decode_melody -> metrics, over a dataset split.

#include "iaeilm/denoiser.hpp"
#include "iaeilm/metrics.hpp"
#include "iaeilm/synthworld.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace iaeilm::eval {

/// Produces a latent for a conditioning sample (its style and pitch) from `seed`.
using Generator = std::function<Matrix<float>(const synth::SynthSample& cond, std::uint64_t seed)>;

struct SampleResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  int style_id = 0;
  metrics::MetricsReport report;
};

struct EvalResult {
  metrics::MetricsReport mean;
  std::vector<SampleResult> per_sample;
};

/// Sample i is generated with seed derive_seed(seed, i); results do not depend on
/// the worker count.
EvalResult evaluate_model(const Generator& gen, const std::vector<synth::SynthSample>& samples,
                          const synth::SynthConfig& world, std::uint64_t seed);

/// Euler sampler over the trained velocity field. guidance_scale s > 0 uses
/// v = v_cond + s (v_cond - v_uncond).
Generator model_generator(const Denoiser<float>& model, int steps, double guidance_scale = 0.0);

/// Upper-bound "model": re-renders the conditioning pitch with fresh noise.
Generator oracle_generator(const synth::SynthConfig& world);

/// {rpa, rca, oa, n_ref_voiced, n_frames, config_hash, seed}; undefined metrics are null.
std::string report_json(const metrics::MetricsReport& r, const std::string& config_hash, std::uint64_t seed);

/// report.json plus per_sample.csv (index,seed,style_id,rpa,rca,oa,n_ref_voiced,n_frames).
void write_report(const std::filesystem::path& dir, const EvalResult& r, const std::string& config_hash,
                  std::uint64_t seed);

}  // namespace iaeilm::eval
