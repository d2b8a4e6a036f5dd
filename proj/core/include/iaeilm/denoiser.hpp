#pragma once

// Melody encoder + backbone as one trainable velocity model.

#include "iaeilm/backbone.hpp"
#include "iaeilm/checkpoint.hpp"
#include "iaeilm/config.hpp"
#include "iaeilm/flow.hpp"
#include "iaeilm/melody.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iaeilm {

template <class S>
struct DenoiserCache {
  melody::EncoderCache<S> encoder;
  Index source_frames = 0;
  backbone::ForwardCache<S> net;
};

template <class S>
struct Denoiser {
  backbone::BackboneConfig cfg;
  melody::EncoderWeights<S> encoder;  // no layers when the injector is NONE
  backbone::BackboneWeights<S> net;

  static Denoiser init(const backbone::BackboneConfig& cfg, std::uint64_t seed);

  Denoiser zeros_like() const;
  std::vector<nn::ParamRef<S>> parameters();
  std::vector<nn::ParamRef<S>> parameters() const;  // pointers must not be written through
  std::size_t parameter_count(std::optional<nn::ParamGroup> group = std::nullopt) const;

  /// Encodes the pitch features and resamples to `frames`. Returns an empty (frames x M)
  /// zero matrix when the injector is NONE.
  Matrix<S> melody_feature(const melody::PitchFeature& feat, Index frames,
                           DenoiserCache<S>* cache = nullptr) const;

  /// Velocity prediction with a precomputed melody feature.
  Matrix<S> velocity(const Matrix<S>& x_t, double t, int style_id, const Matrix<S>& m,
                     bool use_melody = true) const;

  /// Flow-matching loss for one sample; adds parameter gradients into `grad`.
  double loss_and_grad(const flow::FlowState<S>& state, int style_id, const melody::PitchFeature& feat,
                       bool use_melody, Denoiser& grad) const;

  double loss(const flow::FlowState<S>& state, int style_id, const melody::PitchFeature& feat,
              bool use_melody = true) const;

  std::vector<ckpt::NamedTensor> to_tensors() const;
  /// Requires exactly the tensor names and dims this configuration produces.
  void from_tensors(const std::vector<ckpt::NamedTensor>& tensors);
};

/// Parameters flattened in `parameters()` order, for checksums and comparisons.
template <class S>
std::vector<S> flatten(const Denoiser<S>& d, std::optional<nn::ParamGroup> group = std::nullopt);

/// Checkpoint plus the sidecar `<path>.json` carrying the training config, its hash,
/// the dataset hash and the step.
struct ModelFile {
  Denoiser<float> model;
  TrainConfig config;
  std::string dataset_hash;
  int step = 0;
};

void save_model(const std::filesystem::path& path, const ModelFile& mf);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace iaeilm
