#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spur/encoder.hpp"
#include "spur/scene.hpp"
#include "spur/sscv.hpp"

namespace spur {

/// Value from a TOML-style file: bool, number, string or array.
struct ConfigValue {
  std::variant<bool, double, std::string, std::vector<ConfigValue>> value;
  int line = 0;  // 1-based source line, 0 when built in memory
};

/// A table holds plain keys, sub-tables ([name]) and arrays of tables ([[name]]).
struct ConfigTable {
  std::map<std::string, ConfigValue> values;
  std::map<std::string, ConfigTable> tables;
  std::map<std::string, std::vector<ConfigTable>> arrays;
};

/// Subset of TOML: comments, [table], [[array]], key = value, basic strings,
/// integers and floats, booleans, (nested) arrays. Throws FormatError with
/// the source name and line.
ConfigTable parse_config_text(const std::string& text, const std::string& source_name);

struct PipelineConfig {
  ExtractionConfig extraction;
  EncoderConfig encoder;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> weights;

  void validate() const;
  /// Stable `key=value;` rendering of every numeric setting.
  std::string canonical_string() const;
  std::uint64_t hash() const;
};

/// Top-level keys: n_fft, win_length, hop, window, n_mel_bands, alpha,
/// epsilon, seed. Sections [encoder] and [paths]. Unknown keys are rejected.
PipelineConfig pipeline_config_from_table(const ConfigTable& table, const std::string& source_name,
                                          const std::filesystem::path& base_dir = {});
PipelineConfig parse_pipeline_config(const std::string& text, const std::string& source_name,
                                     const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Scene keys plus one [[event]] table per event. An event gives either
/// `trajectory = [[t, az, el, dist], ...]` or a static azimuth/elevation/distance.
SceneSpec scene_spec_from_table(const ConfigTable& table, const std::string& source_name,
                                const std::filesystem::path& base_dir = {});
SceneSpec parse_scene_spec(const std::string& text, const std::string& source_name,
                           const std::filesystem::path& base_dir = {});
SceneSpec load_scene_spec(const std::filesystem::path& path);

}  // namespace spur
