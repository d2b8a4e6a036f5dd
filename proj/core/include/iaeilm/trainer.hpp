#pragma once

#include "iaeilm/config.hpp"
#include "iaeilm/dataset.hpp"
#include "iaeilm/denoiser.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace iaeilm::train {

/// Linear warmup over the first `warmup_steps` optimizer steps, then constant.
/// `step` is zero-based; the first step already uses lr / warmup_steps.
double lr_at(const TrainConfig& cfg, int step);

/// Decoupled weight decay Adam over a flat parameter list. Parameters outside the
/// trainable mask are never touched (no decay, no moment state updates).
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, std::vector<bool> trainable);
  void step(std::vector<nn::ParamRef<float>>& params, const std::vector<nn::ParamRef<float>>& grads, double lr);
  int steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::vector<bool> trainable_;
  std::vector<Matrix<float>> m_, v_;
  int t_ = 0;
};

/// Global L2 norm over the masked gradients.
double grad_norm(const std::vector<nn::ParamRef<float>>& grads, const std::vector<bool>& mask);

struct StepRecord {
  int step = 0;  // 1-based optimizer step
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
};

struct TrainResult {
  Denoiser<float> model;
  std::vector<StepRecord> history;
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
  std::string backbone_checksum_before;
  std::string backbone_checksum_after;
  double wall_seconds = 0.0;
  std::filesystem::path final_checkpoint;
};

struct TrainOptions {
  /// Checkpoints, loss.csv and diagnostics go here. Empty: nothing is written.
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
  int log_every = 100;
};

/// Seed of the batch drawn at zero-based optimizer step `step`, micro-batch `micro`.
std::uint64_t batch_seed(const TrainConfig& cfg, int step, int micro);

/// FNV-1a over the raw bytes of the given parameter group.
std::string checksum(const Denoiser<float>& model, nn::ParamGroup group);

/// Trains on `ds.train`. Throws NumericalError (after writing nan_dump.json when an
/// out_dir is set) if the loss or gradient becomes non-finite.
TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, const TrainOptions& opt = {});

/// Loss of step 0's first batch without updating anything. Handy for comparing
/// a zero-initialized injector against the unconditional model.
double initial_batch_loss(const TrainConfig& cfg, const data::Dataset& ds, const Denoiser<float>& model);

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace iaeilm::train
