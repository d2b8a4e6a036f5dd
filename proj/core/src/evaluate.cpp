#include "iaeilm/evaluate.hpp"

#include "iaeilm/flow.hpp"
#include "json_io.hpp"

#include <cstdio>
#include <fstream>

namespace iaeilm::eval {

EvalResult evaluate_model(const Generator& gen, const std::vector<synth::SynthSample>& samples,
                          const synth::SynthConfig& world, std::uint64_t seed) {
  EvalResult res;
  res.per_sample.resize(samples.size());
  parallel_for(static_cast<int>(samples.size()), worker_threads(), [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& s = samples[idx];
    auto& out = res.per_sample[idx];
    out.index = idx;
    out.seed = derive_seed(seed, idx);
    out.style_id = s.style_id;
    const Matrix<float> x = gen(s, out.seed);
    out.report = metrics::report_pair(s.pitch, synth::decode_melody(x, world));
  });
  std::vector<metrics::MetricsReport> reports;
  reports.reserve(res.per_sample.size());
  for (const auto& r : res.per_sample) reports.push_back(r.report);
  res.mean = metrics::mean_report(reports);
  return res;
}

Generator model_generator(const Denoiser<float>& model, int steps, double guidance_scale) {
  return [&model, steps, guidance_scale](const synth::SynthSample& cond, std::uint64_t seed) {
    const Index frames = cond.x0.rows();
    const Matrix<float> m = model.melody_feature(melody::extract_pitch_features(cond.pitch), frames);
    const int style = cond.style_id;
    flow::VelocityField<float> v = [&](const Matrix<float>& x, double sigma) -> Matrix<float> {
      Matrix<float> vc = model.velocity(x, sigma, style, m, true);
      if (guidance_scale > 0.0) {
        const Matrix<float> vu = model.velocity(x, sigma, style, m, false);
        vc += static_cast<float>(guidance_scale) * (vc - vu);
      }
      return vc;
    };
    return flow::sample(v, frames, static_cast<Index>(model.cfg.latent_dim), steps, seed);
  };
}

Generator oracle_generator(const synth::SynthConfig& world) {
  return [world](const synth::SynthSample& cond, std::uint64_t seed) {
    return synth::synth_generate(cond.pitch, cond.style_id, world, seed).x0;
  };
}

std::string report_json(const metrics::MetricsReport& r, const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json j = {{"rpa", detail::optional_number(r.rpa)},
                      {"rca", detail::optional_number(r.rca)},
                      {"oa", detail::optional_number(r.oa)},
                      {"n_ref_voiced", r.n_ref_voiced},
                      {"n_frames", r.n_frames},
                      {"config_hash", config_hash},
                      {"seed", seed}};
  return j.dump(2) + "\n";
}

namespace {

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

}  // namespace

void write_report(const std::filesystem::path& dir, const EvalResult& r, const std::string& config_hash,
                  std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  detail::write_text(dir / "report.json", report_json(r.mean, config_hash, seed));
  std::string csv = "index,seed,style_id,rpa,rca,oa,n_ref_voiced,n_frames\n";
  for (const auto& s : r.per_sample) {
    csv += std::to_string(s.index) + "," + std::to_string(s.seed) + "," + std::to_string(s.style_id) + "," +
           csv_number(s.report.rpa) + "," + csv_number(s.report.rca) + "," + csv_number(s.report.oa) + "," +
           std::to_string(s.report.n_ref_voiced) + "," + std::to_string(s.report.n_frames) + "\n";
  }
  detail::write_text(dir / "per_sample.csv", csv);
}

}  // namespace iaeilm::eval
