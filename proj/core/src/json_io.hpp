#pragma once

// Private JSON helpers shared by the harness sources.

#include "iaeilm/config.hpp"
#include "iaeilm/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace iaeilm::detail {

nlohmann::json to_json_value(const TrainConfig& c);
nlohmann::json to_json_value(const DatasetConfig& d);
nlohmann::json to_json_value(const backbone::BackboneConfig& b);
void from_json_value(const nlohmann::json& j, TrainConfig& c);
void from_json_value(const nlohmann::json& j, DatasetConfig& d);
nlohmann::json parse_json(const std::string& text);

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace iaeilm::detail
