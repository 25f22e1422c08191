#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wildfire/dates.hpp"

namespace wildfire {

enum class ChannelGroup { vegetation, topography, weather, landcover, fire };

std::string_view to_string(ChannelGroup group);
ChannelGroup parse_channel_group(std::string_view text);

struct ChannelSpec {
  std::string name;
  ChannelGroup group = ChannelGroup::vegetation;
  bool categorical = false;
  std::string units;

  bool operator==(const ChannelSpec&) const = default;
};

using ChannelSchema = std::vector<ChannelSpec>;

// Throws ConfigError unless names are unique and exactly one channel is fire.
void validate_schema(const ChannelSchema& schema);
int fire_channel_of(const ChannelSchema& schema);
int channel_index(const ChannelSchema& schema, std::string_view name);

ChannelSchema read_schema(const std::filesystem::path& path);
void write_schema(const std::filesystem::path& path, const ChannelSchema& schema);

/// One wildfire event: a dense D x C x H x W stack of daily rasters.
///
/// Fire-band values are binarized on load (> 0 burns). A pixel is nodata on
/// a day when any of its bands is non-finite; the fire band is stored as 0
/// there and the mask records the pixel.
struct FireEventCube {
  std::string event_id;
  int year = 0;
  std::vector<Date> dates;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> raster;
  ChannelSchema schema;
  int fire_channel_index = 0;
  // D x H x W, empty when the event has no nodata pixels.
  std::vector<std::uint8_t> nodata;

  int days() const { return static_cast<int>(dates.size()); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  std::span<const float> plane(int day, int channel) const {
    return {raster.data() + (static_cast<std::size_t>(day) * channels + channel) * plane_size(),
            plane_size()};
  }
  std::span<float> plane(int day, int channel) {
    return {raster.data() + (static_cast<std::size_t>(day) * channels + channel) * plane_size(),
            plane_size()};
  }
  bool is_nodata(int day, std::size_t pixel) const {
    return !nodata.empty() && nodata[static_cast<std::size_t>(day) * plane_size() + pixel] != 0;
  }
  // Number of burning pixels on a day.
  std::size_t fire_pixels(int day) const;

  // Checks shape consistency and the fire/dimension invariants.
  void validate() const;
};

/// A (T-day input window, next-day target) instance.
struct WindowSample {
  std::string event_id;
  int year = 0;
  Date target_date;
  int window = 0;  // T
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> inputs;         // T x C x H x W, oldest day first
  std::vector<std::uint8_t> target;  // H x W
  std::vector<std::uint8_t> valid;   // H x W, 0 where the target is nodata
  std::vector<int> day_of_year;      // T entries in [1, 365]
  double prevalence = 0.0;           // positive fraction over valid pixels
  int fire_channel = 0;              // index within the selected channels
  ChannelSchema schema;              // selected channels

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> plane(int day, int channel) const {
    return {inputs.data() + (static_cast<std::size_t>(day) * channels + channel) * plane_size(),
            plane_size()};
  }
  std::span<float> plane(int day, int channel) {
    return {inputs.data() + (static_cast<std::size_t>(day) * channels + channel) * plane_size(),
            plane_size()};
  }
  std::size_t positive_pixels() const;
};

struct FeatureSet {
  std::string name;  // Veg, Multi, All or custom
  std::vector<std::string> channel_names;

  // Veg = vegetation + fire groups; Multi adds topography and landcover;
  // All is every channel of the schema.
  static FeatureSet named(std::string_view name, const ChannelSchema& schema);
};

// Loads `<dir>/<YYYY-MM-DD>.tif` files into a cube. The event id is the
// directory name and the year is the parent directory name when numeric.
FireEventCube load_event(const std::filesystem::path& dir, const ChannelSchema& schema);
void write_event(const FireEventCube& cube, const std::filesystem::path& dir);

std::vector<WindowSample> window_samples(const FireEventCube& cube, int window,
                                         const FeatureSet& features);

FireEventCube select_features(const FireEventCube& cube, const FeatureSet& features);

/// Per-channel z-score statistics.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  // Categorical and fire channels are never rescaled.
  std::vector<bool> passthrough;
};

// Statistics over all valid pixels and days of the given (training) samples.
ChannelStats compute_channel_stats(std::span<const WindowSample> samples);

// Standardizes continuous channels; non-finite inputs become 0 afterwards.
// Zero-variance channels use std = 1 and append a warning.
std::vector<WindowSample> normalize(std::vector<WindowSample> samples, const ChannelStats& stats,
                                    std::vector<std::string>* warnings = nullptr);

/// An on-disk dataset: `<root>/schema.json` plus `<root>/<year>/<event>/`.
struct Dataset {
  std::filesystem::path root;
  ChannelSchema schema;
  std::vector<FireEventCube> events;

  std::vector<int> years() const;
};

Dataset load_dataset(const std::filesystem::path& root);

// Windows every event of the dataset; output order is the event order.
std::vector<WindowSample> dataset_samples(const Dataset& dataset, int window,
                                          const FeatureSet& features);

}  // namespace wildfire
