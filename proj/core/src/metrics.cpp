#include "iaeilm/metrics.hpp"

#include <cmath>
#include <string>

namespace iaeilm::metrics {

double cents(double est_hz, double ref_hz) { return 1200.0 * std::log2(est_hz / ref_hz); }

double chroma_cents(double est_hz, double ref_hz) {
  const double d = cents(est_hz, ref_hz);
  return d - 1200.0 * std::round(d / 1200.0);
}

FrameCounts count_frames(const melody::PitchSequence& ref, const melody::PitchSequence& est) {
  if (ref.size() != est.size()) {
    throw ShapeError("melody metrics: reference has " + std::to_string(ref.size()) +
                     " frames, estimate has " + std::to_string(est.size()));
  }
  FrameCounts c;
  c.n_frames = ref.size();
  for (Index i = 0; i < ref.size(); ++i) {
    const bool rv = ref.voiced(i);
    const bool ev = est.voiced(i);
    if (!rv) {
      if (!ev) ++c.overall_correct;
      continue;
    }
    ++c.n_ref_voiced;
    if (!ev) continue;
    const double r = ref.f0_hz[static_cast<std::size_t>(i)];
    const double e = est.f0_hz[static_cast<std::size_t>(i)];
    if (std::abs(cents(e, r)) <= kCentTolerance) {
      ++c.pitch_correct;
      ++c.overall_correct;
    }
    if (std::abs(chroma_cents(e, r)) <= kCentTolerance) ++c.chroma_correct;
  }
  return c;
}

namespace {
std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

std::optional<double> rpa(const melody::PitchSequence& ref, const melody::PitchSequence& est) {
  const auto c = count_frames(ref, est);
  return ratio(c.pitch_correct, c.n_ref_voiced);
}

std::optional<double> rca(const melody::PitchSequence& ref, const melody::PitchSequence& est) {
  const auto c = count_frames(ref, est);
  return ratio(c.chroma_correct, c.n_ref_voiced);
}

std::optional<double> oa(const melody::PitchSequence& ref, const melody::PitchSequence& est) {
  const auto c = count_frames(ref, est);
  return ratio(c.overall_correct, c.n_frames);
}

MetricsReport report_pair(const melody::PitchSequence& ref, const melody::PitchSequence& est) {
  const auto c = count_frames(ref, est);
  return {ratio(c.pitch_correct, c.n_ref_voiced), ratio(c.chroma_correct, c.n_ref_voiced),
          ratio(c.overall_correct, c.n_frames), c.n_ref_voiced, c.n_frames};
}

MetricsReport mean_report(const std::vector<MetricsReport>& per_sample) {
  MetricsReport out;
  double sums[3] = {0, 0, 0};
  std::int64_t counts[3] = {0, 0, 0};
  for (const auto& r : per_sample) {
    const std::optional<double>* vals[3] = {&r.rpa, &r.rca, &r.oa};
    for (int k = 0; k < 3; ++k) {
      if (*vals[k]) {
        sums[k] += **vals[k];
        ++counts[k];
      }
    }
    out.n_ref_voiced += r.n_ref_voiced;
    out.n_frames += r.n_frames;
  }
  out.rpa = counts[0] ? std::optional<double>(sums[0] / static_cast<double>(counts[0])) : std::nullopt;
  out.rca = counts[1] ? std::optional<double>(sums[1] / static_cast<double>(counts[1])) : std::nullopt;
  out.oa = counts[2] ? std::optional<double>(sums[2] / static_cast<double>(counts[2])) : std::nullopt;
  return out;
}

}  // namespace iaeilm::metrics
