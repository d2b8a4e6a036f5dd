#pragma once

// Synthetic "songs": a latent whose first P channels hold a one-bin-wide Gaussian
// bump at the quantized log-pitch of each voiced frame and whose last S channels
// hold a constant per-style code. decode_melody reads the contour back out.

#include "iaeilm/common.hpp"
#include "iaeilm/melody.hpp"

#include <cstdint>
#include <vector>

namespace iaeilm::synth {

struct SynthConfig {
  int frames = 128;
  int pitch_bins = 96;
  int style_channels = 16;
  int num_styles = 4;
  double noise_std = 0.05;
  double voicing_rate = 0.8;
  double mean_segment_frames = 10.0;
  std::uint64_t seed = 0;

  int latent_dim() const { return pitch_bins + style_channels; }
  /// 1200 * log2(900 / 50) / (P - 1).
  double bin_width_cents() const;
  /// Throws ConfigError; requires bin width < 100 cents and a power-of-two
  /// style width larger than num_styles.
  void validate() const;
};

/// Continuous bin coordinate of `hz`: log2 f mapped linearly from [50, 900] to [0, P - 1].
double bin_position(double hz, int pitch_bins);
/// Nearest bin index, clamped to [0, P - 1].
int bin_of(double hz, int pitch_bins);
/// 50 * 2^(k * log2(18) / (P - 1)).
double bin_center_hz(int bin, int pitch_bins);

/// Orthogonal +-1 code for a style (row style+1 of a Sylvester Hadamard matrix).
std::vector<int> style_code(int style_id, int style_channels);

struct SynthSample {
  Matrix<float> x0;  // frames x (P + S)
  melody::PitchSequence pitch;
  int style_id = 0;
  std::uint64_t seed = 0;
};

SynthSample synth_generate(const melody::PitchSequence& pitch, int style_id, const SynthConfig& cfg,
                           std::uint64_t seed);

/// Per frame: unvoiced when the pitch-channel maximum is below 0.5, otherwise the
/// bin-center frequency of the argmax channel.
template <class S>
melody::PitchSequence decode_melody(const Matrix<S>& x, const SynthConfig& cfg);

/// MIDI note numbers (A4 = 69 = 440 Hz) of the scale used by `style_id`, restricted
/// to [50, 900] Hz.
std::vector<int> style_scale(int style_id);
double midi_to_hz(int note);

/// Note/rest segments with geometric durations (mean `mean_segment_frames`); a segment
/// is voiced with probability voicing_rate and takes a pitch from the style's scale.
melody::PitchSequence random_pitch_contour(const SynthConfig& cfg, int style_id, std::uint64_t seed);

/// Style, contour and latent for sample `seed`, all derived from that one seed.
SynthSample random_sample(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace iaeilm::synth
