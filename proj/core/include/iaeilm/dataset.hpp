#pragma once

// On-disk synthetic dataset.
//
//   <dir>/manifest.json   config, dataset hash, split files and counts
//   <dir>/<split>.rec     "IAEDSET1" | u32 count | count x record
//
// record: u32 T | u32 P | u32 S | u32 style_id | u64 seed
//         | T*(P+S) f32 x0 (row-major) | u32 csv_bytes | pitch CSV text

#include "iaeilm/config.hpp"
#include "iaeilm/synthworld.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace iaeilm::data {

struct Dataset {
  DatasetConfig config;
  std::string hash;
  std::vector<synth::SynthSample> train;
  std::vector<synth::SynthSample> val;
  std::vector<synth::SynthSample> test;

  const std::vector<synth::SynthSample>& split(const std::string& name) const;
};

/// Generates all splits. Sample i (counting train, then val, then test) uses
/// seed derive_seed(config.synth.seed, i).
Dataset generate(const DatasetConfig& config);

void write_record(std::ostream& os, const synth::SynthSample& s, const synth::SynthConfig& cfg);
synth::SynthSample read_record(std::istream& is);

/// Writes split files and manifest.json. Throws IoError naming the failing path.
void save(const Dataset& ds, const std::filesystem::path& dir);
Dataset load(const std::filesystem::path& dir);

/// Counts records actually present in each split file without decoding payloads.
std::size_t count_records(const std::filesystem::path& split_file);

}  // namespace iaeilm::data
