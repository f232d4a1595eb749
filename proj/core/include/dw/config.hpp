#pragma once

#include <filesystem>
#include <string>

#include "dw/training.hpp"

/// Run configuration: INI-style `key = value` lines grouped under
/// [data] [model] [match] [train] [loss]. Unknown keys are rejected.
namespace dw::config {

struct DataConfig {
  std::filesystem::path dir = "data";
  int scenes = 8;
  int height = 32;
  int width = 32;
  int num_frames = 5;
  double density = 0.5;
  synth::InconsistencySet inconsistency = synth::InconsistencySet::all();
  std::vector<synth::Weather> weathers{synth::Weather::kRain, synth::Weather::kSnow, synth::Weather::kFog};
  std::uint64_t seed = 7;
};

struct Config {
  DataConfig data;
  train::TrainConfig train;
};

/// Sets `section.key` from its textual value.
void set(Config& cfg, const std::string& section, const std::string& key, const std::string& value);
/// `section.key=value` form used by command-line overrides.
void apply_override(Config& cfg, const std::string& assignment);

Config load(const std::filesystem::path& path);
Config parse(const std::string& text);
/// Round-trippable text form.
std::string dump(const Config& cfg);

}  // namespace dw::config
