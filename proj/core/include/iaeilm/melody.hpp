#pragma once

// Pitch contour -> time-aligned melody condition.
//
//   PitchSequence --extract_pitch_features--> PitchFeature (T0 x 2)
//                 --melody_encode-----------> m0 (T0 x M)
//                 --interpolate-------------> MelodyFeature (T x M)

#include "iaeilm/common.hpp"
#include "iaeilm/nn.hpp"

#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace iaeilm::melody {

inline constexpr double kMinVoicedHz = 50.0;
inline constexpr double kMaxVoicedHz = 900.0;
inline constexpr double kFrameRateHz = 100.0;

/// Frame-rate F0 contour. A value of 0 marks an unvoiced frame.
struct PitchSequence {
  std::vector<double> f0_hz;
  double frame_rate_hz = kFrameRateHz;

  Index size() const { return static_cast<Index>(f0_hz.size()); }
  bool voiced(Index i) const { return f0_hz[static_cast<std::size_t>(i)] > 0.0; }
  bool operator==(const PitchSequence&) const = default;
};

enum class OutOfRangePolicy { reject, clamp };

/// Checks the voiced-range invariant. Under `clamp`, out-of-range voiced values are
/// pulled to [50, 900] Hz; negative or non-finite values are always rejected.
/// Throws DomainError naming the first offending frame.
PitchSequence validate_pitch(PitchSequence p, OutOfRangePolicy policy = OutOfRangePolicy::reject);

/// (log2 f - log2 50) / (log2 900 - log2 50).
double normalized_log_pitch(double hz);

/// Column 0: normalized log-pitch (0 on unvoiced frames). Column 1: voiced flag.
struct PitchFeature {
  Matrix<double> values;
  Index size() const { return values.rows(); }
};

PitchFeature extract_pitch_features(const PitchSequence& p,
                                    OutOfRangePolicy policy = OutOfRangePolicy::reject);

// Melody encoder -------------------------------------------------------------

enum class Activation { tanh, sine };

struct EncoderConfig {
  std::vector<int> hidden_channels{32, 64};
  int kernel = 3;
  /// Sine with a large first-layer scale gives the layers above high-frequency
  /// features of log-pitch; tanh could not resolve 96 pitch bins at default size.
  Activation activation = Activation::sine;
  /// Multiplier on the first layer's initial weights (frequency scale for sine).
  double first_layer_scale = 100.0;
};

/// Length-preserving 1-D convolution, weights stored im2col-style:
/// row j*in + i of `weight` multiplies input channel i at offset j - kernel/2.
template <class S>
struct ConvLayer {
  Matrix<S> weight;  // (kernel * in) x out
  Matrix<S> bias;    // 1 x out
  int kernel = 1;
  int in_channels = 1;

  int out_channels() const { return static_cast<int>(weight.cols()); }
};

template <class S>
struct EncoderWeights {
  std::vector<ConvLayer<S>> layers;
  Activation activation = Activation::tanh;

  int out_width() const { return layers.empty() ? 0 : layers.back().out_channels(); }
  EncoderWeights zeros_like() const;
  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out);
};

template <class S>
EncoderWeights<S> init_encoder(const EncoderConfig& cfg, int out_width, std::mt19937_64& rng);

template <class S>
struct EncoderCache {
  std::vector<Matrix<S>> columns;      // im2col input of each layer
  std::vector<Matrix<S>> pre_activation;  // outputs before the nonlinearity (all but last)
};

/// Stack of stride-1, zero-padded convolutions with the activation between layers.
template <class S>
Matrix<S> melody_encode(const PitchFeature& feat, const EncoderWeights<S>& w,
                        EncoderCache<S>* cache = nullptr);

/// Accumulates weight gradients. Returns nothing: the pitch feature is not trainable.
template <class S>
void melody_encode_backward(const EncoderCache<S>& cache, const EncoderWeights<S>& w,
                            const Matrix<S>& d_out, EncoderWeights<S>& grad);

/// Linear resampling along time with endpoint alignment: output frame j sits at
/// source position j * (T0 - 1) / (T - 1).
template <class S>
Matrix<S> interpolate(const Matrix<S>& m0, Index frames);

/// Adjoint of interpolate: maps a (T x M) gradient back to (T0 x M).
template <class S>
Matrix<S> interpolate_backward(const Matrix<S>& d_out, Index source_frames);

// CSV ------------------------------------------------------------------------

/// `frame,f0_hz` header, one row per 10 ms frame.
void write_pitch_csv(std::ostream& os, const PitchSequence& p);
PitchSequence read_pitch_csv(std::istream& is);
void write_pitch_csv(const std::filesystem::path& path, const PitchSequence& p);
PitchSequence read_pitch_csv(const std::filesystem::path& path);

}  // namespace iaeilm::melody
