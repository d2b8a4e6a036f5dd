#pragma once

// Command implementations behind the CLI. They throw the typed errors from
// common.hpp; the CLI maps those to exit codes.

#include "iaeilm/backbone.hpp"
#include "iaeilm/config.hpp"
#include "iaeilm/evaluate.hpp"
#include "iaeilm/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace iaeilm::exp {

struct Overrides {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool freeze_backbone = false;
  std::optional<backbone::Injector> injector;
  std::optional<backbone::Placement> placement;
  /// Guidance scale. A positive value also enables 10% melody dropout in training
  /// unless the config already sets a dropout rate.
  std::optional<double> guidance;
};

inline constexpr double kGuidanceDropout = 0.1;

/// Defaults, then the JSON file (if any), then the command-line overrides.
TrainConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const Overrides& o);

/// Writes train/val/test splits and manifest.json into out_dir.
data::Dataset cmd_gen_data(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

struct TrainRun {
  TrainConfig config;  // as trained: data section replaced by the dataset's own
  train::TrainResult result;
  eval::EvalResult val;
};

/// Trains on the dataset in data_dir, evaluates the validation split, and writes
/// checkpoints, loss.csv, val/ reports and run.json into out_dir.
TrainRun cmd_train(TrainConfig cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                   std::ostream* log = nullptr);

struct EvalOptions {
  std::string split = "test";
  std::optional<std::uint64_t> seed;  // default: the training seed
  std::optional<double> guidance;     // default: the training config's scale
};

/// Throws ConfigError when the checkpoint was trained on a different dataset.
eval::EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out_dir, const EvalOptions& opt = {});

/// Generates one latent for a pitch CSV and style; writes latent.csv and the
/// decoded melody (melody.csv) into out_dir.
melody::PitchSequence cmd_sample(const std::filesystem::path& checkpoint, const std::filesystem::path& pitch_csv,
                                 int style_id, std::uint64_t seed, const std::filesystem::path& out_dir,
                                 std::optional<double> guidance = std::nullopt);

struct AblationVariant {
  backbone::Injector injector;
  backbone::Placement placement;
  std::string label() const;
};

/// EA, EILM_STATIC and IA_EILM before the FFN, plus IA_EILM before attention.
std::vector<AblationVariant> ablation_variants();

struct AblationCell {
  AblationVariant variant;
  std::uint64_t seed = 0;
  metrics::MetricsReport test;
};

struct AblationTable {
  std::vector<AblationCell> cells;  // variant-major, seeds in order
  const AblationCell& at(std::size_t variant, std::size_t seed_index) const;
  std::size_t num_seeds = 0;
};

/// Trains and tests every variant for seeds base.seed .. base.seed + num_seeds - 1 under
/// out_dir/<variant>_seed<k>/, reusing finished runs whose config hash matches, and
/// writes out_dir/ablation.csv.
AblationTable cmd_ablate(const TrainConfig& base, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir, int num_seeds = 3, std::ostream* log = nullptr);

/// variant,injector,placement,seed,rpa,rca,oa; per variant one row per seed then
/// `mean` and `std` rows.
std::string ablation_csv(const AblationTable& t);

/// Runs every finite-difference suite. Returns the number of failing suites.
int cmd_grad_check(std::ostream& os, bool verbose = false);

}  // namespace iaeilm::exp
