#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wildfire/data.hpp"

namespace wildfire {

// Affine change of one channel's marginal: x' = x * scale + offset.
struct ChannelShift {
  double offset = 0.0;
  double scale = 1.0;
};

struct SynthYearSpec {
  int year_label = 2018;
  std::map<std::string, ChannelShift> covariate_shift;
  // Multiplies the environmental spread coefficients (vegetation, moisture,
  // wind). Bias and neighbour coupling are unaffected.
  double concept_shift = 1.0;
  double ignition_rate = 1.5;
};

/// Logit coefficients of the cellular-automaton ignition rule.
struct SpreadCoefficients {
  double bias = -3.5;
  double vegetation = 4.0;
  double moisture = 4.0;
  double wind = 0.7;
  double neighbors = 0.6;

  bool operator==(const SpreadCoefficients&) const = default;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::vector<SynthYearSpec> years;
  int events_per_year = 20;
  int height = 64;
  int width = 64;
  int max_days = 20;
  int burn_days = 3;
  SpreadCoefficients coefficients;
  ChannelSchema schema;  // defaults to default_synth_schema()

  void validate() const;
};

// wind_u, wind_v, vegetation, moisture, elevation, landcover, fire.
ChannelSchema default_synth_schema();

// Strict JSON mapping: unknown keys raise ConfigError naming the key.
SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& config);

// Coefficients after applying a year's concept shift.
SpreadCoefficients effective_coefficients(const SpreadCoefficients& base, const SynthYearSpec& year);

// Generates every event in memory. Events are ordered by year then index.
std::vector<FireEventCube> generate_events(const SynthConfig& config);

// Writes `<root>/schema.json` and `<root>/<year>/<event>/<date>.tif`.
void generate(const SynthConfig& config, const std::filesystem::path& root);

// Most recent input day's fire mask, as scores in {0, 1}.
std::vector<float> persistence_scores(const WindowSample& sample);

}  // namespace wildfire
