#pragma once

// Small end-to-end configuration shared by the harness tests and the acceptance
// binary. Trains in well under a second.

#include "iaeilm/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fixtures {

inline iaeilm::TrainConfig small_config() {
  iaeilm::TrainConfig c = iaeilm::default_train_config();
  c.data.synth.frames = 16;
  c.data.synth.pitch_bins = 64;
  c.data.synth.style_channels = 8;
  c.data.synth.num_styles = 3;
  c.data.synth.seed = 5;
  c.data.n_train = 24;
  c.data.n_val = 4;
  c.data.n_test = 4;
  c.backbone.num_blocks = 2;
  c.backbone.model_width = 16;
  c.backbone.heads = 2;
  c.backbone.melody_width = 8;
  c.backbone.encoder.hidden_channels = {8};
  c.backbone.latent_dim = c.data.synth.latent_dim();
  c.backbone.num_styles = c.data.synth.num_styles;
  c.batch_size = 4;
  c.max_steps = 6;
  c.warmup_steps = 2;
  c.checkpoint_every = 3;
  c.sample_steps = 4;
  c.lr = 1e-3;
  return c;
}

/// Fresh, empty scratch directory under IAEILM_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch(const std::string& name) {
  const char* env = std::getenv("IAEILM_TEST_TMP");
  const std::filesystem::path root = env ? std::filesystem::path(env) : std::filesystem::temp_directory_path() / "iaeilm_tests";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
