#pragma once

#include "iaeilm/backbone.hpp"
#include "iaeilm/synthworld.hpp"

#include <cstdint>
#include <string>

namespace iaeilm {

struct DatasetConfig {
  synth::SynthConfig synth;
  int n_train = 2000;
  int n_val = 100;
  int n_test = 100;

  void validate() const;
};

struct TrainConfig {
  double lr = 1e-4;
  int warmup_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int grad_accum = 1;
  int max_steps = 4000;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double t_min = 1e-3;
  int checkpoint_every = 500;
  int keep_checkpoints = 3;
  bool freeze_backbone = false;
  bool deterministic = false;
  /// Probability of training a sample without the melody (enables guidance at sampling).
  double cond_dropout = 0.0;
  int sample_steps = 32;
  /// Classifier-free guidance scale; 0 disables guidance.
  double guidance_scale = 0.0;
  backbone::BackboneConfig backbone;
  DatasetConfig data;

  /// Also checks that backbone latent_dim / num_styles agree with the synthetic world.
  void validate() const;
};

/// Default configuration with the backbone sized to the default synthetic world.
TrainConfig default_train_config();

std::string to_json(const TrainConfig& cfg, int indent = 2);
std::string to_json(const DatasetConfig& cfg, int indent = 2);

/// Starts from `base` and overrides every key present in `json`. Unknown keys are errors.
TrainConfig train_config_from_json(const std::string& json, const TrainConfig& base = default_train_config());
DatasetConfig dataset_config_from_json(const std::string& json, const DatasetConfig& base = {});

/// FNV-1a over the canonical (sorted, compact) JSON of the full config.
std::string config_hash(const TrainConfig& cfg);
std::string config_hash(const DatasetConfig& cfg);

}  // namespace iaeilm
