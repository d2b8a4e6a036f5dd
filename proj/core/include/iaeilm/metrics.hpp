#pragma once

// Frame-level melody accuracy:
//   RPA  reference-voiced frames where the estimate is voiced and within 50 cents
//   RCA  same, with the cent difference folded into [-600, 600] (octave-blind)
//   OA   all frames: both unvoiced, or both voiced and within 50 cents
// The 50-cent threshold is inclusive.

#include "iaeilm/melody.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace iaeilm::metrics {

inline constexpr double kCentTolerance = 50.0;

/// 1200 * log2(est / ref).
double cents(double est_hz, double ref_hz);
/// Cent difference folded modulo 1200 into [-600, 600].
double chroma_cents(double est_hz, double ref_hz);

struct FrameCounts {
  std::int64_t n_frames = 0;
  std::int64_t n_ref_voiced = 0;
  std::int64_t pitch_correct = 0;   // ref voiced, est voiced, within tolerance
  std::int64_t chroma_correct = 0;  // ref voiced, est voiced, within tolerance mod octave
  std::int64_t overall_correct = 0;
};

/// Throws ShapeError when the sequences differ in length.
FrameCounts count_frames(const melody::PitchSequence& ref, const melody::PitchSequence& est);

/// Undefined (nullopt) when the reference has no voiced frame.
std::optional<double> rpa(const melody::PitchSequence& ref, const melody::PitchSequence& est);
std::optional<double> rca(const melody::PitchSequence& ref, const melody::PitchSequence& est);
/// Undefined only for empty sequences.
std::optional<double> oa(const melody::PitchSequence& ref, const melody::PitchSequence& est);

struct MetricsReport {
  std::optional<double> rpa;
  std::optional<double> rca;
  std::optional<double> oa;
  std::int64_t n_ref_voiced = 0;
  std::int64_t n_frames = 0;
};

MetricsReport report_pair(const melody::PitchSequence& ref, const melody::PitchSequence& est);

/// Means of the per-sample metrics over the samples where each is defined; frame
/// counts are summed.
MetricsReport mean_report(const std::vector<MetricsReport>& per_sample);

}  // namespace iaeilm::metrics
