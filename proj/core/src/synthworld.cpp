#include "iaeilm/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace iaeilm::synth {

namespace {
const double kLog2Span = std::log2(melody::kMaxVoicedHz / melody::kMinVoicedHz);

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }
}  // namespace

double SynthConfig::bin_width_cents() const {
  return 1200.0 * kLog2Span / static_cast<double>(pitch_bins - 1);
}

void SynthConfig::validate() const {
  if (frames < 1) throw ConfigError("synth: frames must be positive");
  if (pitch_bins < 2) throw ConfigError("synth: need at least two pitch bins");
  if (!(bin_width_cents() < 100.0)) {
    throw ConfigError("synth: bin width " + std::to_string(bin_width_cents()) +
                      " cents must be below 100 so half-bin error stays under 50 cents");
  }
  if (!is_pow2(style_channels)) throw ConfigError("synth: style_channels must be a power of two");
  if (num_styles < 1 || num_styles >= style_channels) {
    throw ConfigError("synth: num_styles must be in [1, style_channels)");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be non-negative");
  if (!(voicing_rate >= 0.0 && voicing_rate <= 1.0)) throw ConfigError("synth: voicing_rate outside [0, 1]");
  if (!(mean_segment_frames >= 1.0)) throw ConfigError("synth: mean_segment_frames must be >= 1");
}

double bin_position(double hz, int pitch_bins) {
  return (std::log2(hz) - std::log2(melody::kMinVoicedHz)) / kLog2Span * static_cast<double>(pitch_bins - 1);
}

int bin_of(double hz, int pitch_bins) {
  const long k = std::lround(bin_position(hz, pitch_bins));
  return static_cast<int>(std::clamp<long>(k, 0, pitch_bins - 1));
}

double bin_center_hz(int bin, int pitch_bins) {
  return melody::kMinVoicedHz *
         std::exp2(static_cast<double>(bin) * kLog2Span / static_cast<double>(pitch_bins - 1));
}

std::vector<int> style_code(int style_id, int style_channels) {
  if (!is_pow2(style_channels)) throw ConfigError("style_code: width must be a power of two");
  const int row = style_id + 1;
  if (style_id < 0 || row >= style_channels) {
    throw DomainError("style_code: style " + std::to_string(style_id) + " has no code of width " +
                      std::to_string(style_channels));
  }
  // Sylvester Hadamard: H[r][c] = (-1)^popcount(r & c).
  std::vector<int> code(static_cast<std::size_t>(style_channels));
  for (int c = 0; c < style_channels; ++c) code[static_cast<std::size_t>(c)] = (__builtin_popcount(row & c) & 1) ? -1 : 1;
  return code;
}

SynthSample synth_generate(const melody::PitchSequence& pitch_in, int style_id, const SynthConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  const melody::PitchSequence pitch = melody::validate_pitch(pitch_in);
  if (pitch.size() != cfg.frames) {
    throw ShapeError("synth_generate: contour has " + std::to_string(pitch.size()) + " frames, config expects " +
                     std::to_string(cfg.frames));
  }
  if (style_id < 0 || style_id >= cfg.num_styles) {
    throw DomainError("synth_generate: style " + std::to_string(style_id) + " out of range");
  }
  const int p_bins = cfg.pitch_bins;
  SynthSample s;
  s.pitch = pitch;
  s.style_id = style_id;
  s.seed = seed;
  s.x0 = Matrix<float>::Zero(cfg.frames, cfg.latent_dim());

  for (Index t = 0; t < cfg.frames; ++t) {
    if (!pitch.voiced(t)) continue;
    const int center = bin_of(pitch.f0_hz[static_cast<std::size_t>(t)], p_bins);
    for (int k = 0; k < p_bins; ++k) {
      const double d = static_cast<double>(k - center);
      s.x0(t, k) = static_cast<float>(std::exp(-0.5 * d * d));
    }
  }
  const auto code = style_code(style_id, cfg.style_channels);
  for (int c = 0; c < cfg.style_channels; ++c) {
    s.x0.col(p_bins + c).setConstant(0.5f * static_cast<float>(code[static_cast<std::size_t>(c)]));
  }
  if (cfg.noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, cfg.noise_std);
    for (Index i = 0; i < s.x0.size(); ++i) s.x0.data()[i] += static_cast<float>(n(rng));
  }
  return s;
}

template <class S>
melody::PitchSequence decode_melody(const Matrix<S>& x, const SynthConfig& cfg) {
  expect_shape(x, -1, cfg.latent_dim(), "decode_melody");
  melody::PitchSequence p;
  p.f0_hz.assign(static_cast<std::size_t>(x.rows()), 0.0);
  for (Index t = 0; t < x.rows(); ++t) {
    Index arg = 0;
    const S peak = x.row(t).head(cfg.pitch_bins).maxCoeff(&arg);
    if (!(peak >= S(0.5))) continue;
    p.f0_hz[static_cast<std::size_t>(t)] = bin_center_hz(static_cast<int>(arg), cfg.pitch_bins);
  }
  return p;
}

double midi_to_hz(int note) { return 440.0 * std::exp2((note - 69) / 12.0); }

std::vector<int> style_scale(int style_id) {
  static const std::vector<std::vector<int>> modes{
      {0, 2, 4, 5, 7, 9, 11},  // major
      {0, 2, 3, 5, 7, 8, 10},  // natural minor
      {0, 2, 4, 7, 9},         // major pentatonic
      {0, 2, 3, 5, 7, 9, 10},  // dorian
  };
  if (style_id < 0) throw DomainError("style_scale: negative style id");
  const auto& intervals = modes[static_cast<std::size_t>(style_id) % modes.size()];
  const int root = (style_id * 7) % 12;
  std::vector<int> notes;
  for (int n = 0; n < 128; ++n) {
    const double hz = midi_to_hz(n);
    if (hz < melody::kMinVoicedHz || hz > melody::kMaxVoicedHz) continue;
    const int pc = ((n - root) % 12 + 12) % 12;
    if (std::find(intervals.begin(), intervals.end(), pc) != intervals.end()) notes.push_back(n);
  }
  return notes;
}

melody::PitchSequence random_pitch_contour(const SynthConfig& cfg, int style_id, std::uint64_t seed) {
  cfg.validate();
  const auto scale = style_scale(style_id);
  std::mt19937_64 rng(seed);
  std::geometric_distribution<int> extra(1.0 / cfg.mean_segment_frames);
  std::bernoulli_distribution voiced(cfg.voicing_rate);
  std::uniform_int_distribution<std::size_t> pick(0, scale.size() - 1);

  melody::PitchSequence p;
  p.f0_hz.reserve(static_cast<std::size_t>(cfg.frames));
  while (static_cast<int>(p.f0_hz.size()) < cfg.frames) {
    const int len = 1 + extra(rng);
    const bool v = voiced(rng);
    const double hz = midi_to_hz(scale[pick(rng)]);
    for (int i = 0; i < len && static_cast<int>(p.f0_hz.size()) < cfg.frames; ++i) {
      p.f0_hz.push_back(v ? hz : 0.0);
    }
  }
  return p;
}

SynthSample random_sample(const SynthConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_int_distribution<int> style(0, cfg.num_styles - 1);
  const int style_id = style(rng);
  const auto pitch = random_pitch_contour(cfg, style_id, derive_seed(seed, 1));
  SynthSample s = synth_generate(pitch, style_id, cfg, derive_seed(seed, 2));
  s.seed = seed;
  return s;
}

template melody::PitchSequence decode_melody<float>(const Matrix<float>&, const SynthConfig&);
template melody::PitchSequence decode_melody<double>(const Matrix<double>&, const SynthConfig&);

}  // namespace iaeilm::synth
