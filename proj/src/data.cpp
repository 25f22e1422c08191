#include "wildfire/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"
#include "wildfire/raster_io.hpp"

namespace wildfire {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ChannelGroup group) {
  switch (group) {
    case ChannelGroup::vegetation: return "vegetation";
    case ChannelGroup::topography: return "topography";
    case ChannelGroup::weather: return "weather";
    case ChannelGroup::landcover: return "landcover";
    case ChannelGroup::fire: return "fire";
  }
  return "vegetation";
}

ChannelGroup parse_channel_group(std::string_view text) {
  for (auto g : {ChannelGroup::vegetation, ChannelGroup::topography, ChannelGroup::weather,
                 ChannelGroup::landcover, ChannelGroup::fire}) {
    if (to_string(g) == text) return g;
  }
  throw ConfigError("unknown channel group '" + std::string(text) + "'", "group");
}

void validate_schema(const ChannelSchema& schema) {
  std::set<std::string> names;
  int fire = 0;
  for (const auto& c : schema) {
    if (c.name.empty()) throw ConfigError("channel with empty name", "name");
    if (!names.insert(c.name).second) throw ConfigError("duplicate channel name '" + c.name + "'", "name");
    if (c.group == ChannelGroup::fire) ++fire;
  }
  if (fire != 1) throw ConfigError("schema must contain exactly one fire channel", "group");
}

int fire_channel_of(const ChannelSchema& schema) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].group == ChannelGroup::fire) return static_cast<int>(i);
  }
  throw ConfigError("schema has no fire channel", "group");
}

int channel_index(const ChannelSchema& schema, std::string_view name) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return static_cast<int>(i);
  }
  throw LookupError("unknown channel '" + std::string(name) + "'");
}

ChannelSchema read_schema(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read schema " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("schema " + path.string() + ": " + e.what());
  }
  ChannelSchema schema;
  try {
    for (const auto& entry : doc.at("channels")) {
      ChannelSpec spec;
      spec.name = entry.at("name").get<std::string>();
      spec.group = parse_channel_group(entry.at("group").get<std::string>());
      spec.categorical = entry.value("categorical", false);
      spec.units = entry.value("units", std::string{});
      schema.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw FormatError("schema " + path.string() + ": " + e.what());
  }
  validate_schema(schema);
  return schema;
}

void write_schema(const fs::path& path, const ChannelSchema& schema) {
  json channels = json::array();
  for (const auto& c : schema) {
    channels.push_back({{"name", c.name},
                        {"group", std::string(to_string(c.group))},
                        {"categorical", c.categorical},
                        {"units", c.units}});
  }
  std::ofstream out(path);
  out << json{{"format_version", 1}, {"channels", channels}}.dump(2) << '\n';
  if (!out) throw FormatError("cannot write schema " + path.string());
}

std::size_t FireEventCube::fire_pixels(int day) const {
  const auto p = plane(day, fire_channel_index);
  return static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [](float v) { return v > 0.0f; }));
}

void FireEventCube::validate() const {
  if (channels != static_cast<int>(schema.size())) throw SchemaMismatchError("cube channel count differs from schema");
  if (fire_channel_index < 0 || fire_channel_index >= channels) throw SchemaMismatchError("fire channel index out of range");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ShapeError("raster size " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be at least 8 and divisible by 8");
  }
  if (raster.size() != dates.size() * channels * plane_size()) throw ShapeError("raster size mismatch");
  if (!nodata.empty() && nodata.size() != dates.size() * plane_size()) throw ShapeError("nodata mask size mismatch");
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (!(dates[i - 1] < dates[i])) throw DuplicateDateError("dates not strictly increasing");
  }
}

std::size_t WindowSample::positive_pixels() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.size(); ++i) n += (target[i] && valid[i]) ? 1 : 0;
  return n;
}

FeatureSet FeatureSet::named(std::string_view name, const ChannelSchema& schema) {
  FeatureSet set;
  set.name = std::string(name);
  auto include = [&](ChannelGroup g) {
    if (name == "All") return true;
    if (g == ChannelGroup::fire || g == ChannelGroup::vegetation) return true;
    if (name == "Multi") return g == ChannelGroup::topography || g == ChannelGroup::landcover;
    return false;
  };
  if (name != "Veg" && name != "Multi" && name != "All") {
    throw LookupError("unknown feature set '" + std::string(name) + "'");
  }
  for (const auto& c : schema) {
    if (include(c.group)) set.channel_names.push_back(c.name);
  }
  return set;
}

namespace {

bool is_raster_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".tif" || ext == ".tiff" || ext == ".TIF" || ext == ".TIFF";
}

// Schema-order channel indices selected by the feature set, with the fire
// channel forced in.
std::vector<int> selected_indices(const ChannelSchema& schema, const FeatureSet& features) {
  std::set<int> wanted;
  for (const auto& name : features.channel_names) wanted.insert(channel_index(schema, name));
  wanted.insert(fire_channel_of(schema));
  return {wanted.begin(), wanted.end()};
}

}  // namespace

FireEventCube load_event(const fs::path& dir, const ChannelSchema& schema) {
  validate_schema(schema);
  if (!fs::is_directory(dir)) throw EmptyEventError("event directory " + dir.string() + " does not exist");

  std::vector<std::pair<Date, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_raster_file(entry.path())) continue;
    files.emplace_back(Date::parse(entry.path().stem().string()), entry.path());
  }
  if (files.empty()) throw EmptyEventError("event " + dir.string() + " has no readable days");
  std::sort(files.begin(), files.end());
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].first == files[i - 1].first) {
      throw DuplicateDateError("event " + dir.string() + " has two files for " + files[i].first.iso());
    }
  }

  FireEventCube cube;
  cube.event_id = dir.filename().string();
  cube.schema = schema;
  cube.channels = static_cast<int>(schema.size());
  cube.fire_channel_index = fire_channel_of(schema);
  const auto year_name = dir.parent_path().filename().string();
  const bool numeric_year = !year_name.empty() && std::all_of(year_name.begin(), year_name.end(),
                                                              [](char ch) { return ch >= '0' && ch <= '9'; });
  cube.year = numeric_year ? std::stoi(year_name) : files.front().first.year();

  bool any_nodata = false;
  std::vector<std::uint8_t> nodata;
  for (std::size_t d = 0; d < files.size(); ++d) {
    RasterImage image = read_raster(files[d].second);
    if (image.bands != cube.channels) {
      throw SchemaMismatchError(files[d].second.string() + " has " + std::to_string(image.bands) +
                                " bands, schema declares " + std::to_string(cube.channels));
    }
    if (d == 0) {
      cube.height = image.height;
      cube.width = image.width;
      cube.raster.reserve(files.size() * image.data.size());
      nodata.assign(files.size() * cube.plane_size(), 0);
    } else if (image.height != cube.height || image.width != cube.width) {
      throw ShapeError(files[d].second.string() + " differs in size from the first day");
    }
    cube.dates.push_back(files[d].first);
    const std::size_t plane = cube.plane_size();
    for (int c = 0; c < cube.channels; ++c) {
      for (std::size_t px = 0; px < plane; ++px) {
        if (!std::isfinite(image.data[c * plane + px])) {
          nodata[d * plane + px] = 1;
          any_nodata = true;
        }
      }
    }
    float* fire = image.data.data() + cube.fire_channel_index * plane;
    for (std::size_t px = 0; px < plane; ++px) {
      fire[px] = (std::isfinite(fire[px]) && fire[px] > 0.0f) ? 1.0f : 0.0f;
    }
    cube.raster.insert(cube.raster.end(), image.data.begin(), image.data.end());
  }
  if (any_nodata) cube.nodata = std::move(nodata);
  cube.validate();
  return cube;
}

void write_event(const FireEventCube& cube, const fs::path& dir) {
  fs::create_directories(dir);
  for (int d = 0; d < cube.days(); ++d) {
    RasterImage image;
    image.bands = cube.channels;
    image.height = cube.height;
    image.width = cube.width;
    const auto begin = cube.raster.begin() + static_cast<std::ptrdiff_t>(d * cube.channels * cube.plane_size());
    image.data.assign(begin, begin + static_cast<std::ptrdiff_t>(cube.channels * cube.plane_size()));
    write_raster(dir / (cube.dates[d].iso() + ".tif"), image);
  }
}

FireEventCube select_features(const FireEventCube& cube, const FeatureSet& features) {
  const auto keep = selected_indices(cube.schema, features);
  FireEventCube out;
  out.event_id = cube.event_id;
  out.year = cube.year;
  out.dates = cube.dates;
  out.height = cube.height;
  out.width = cube.width;
  out.nodata = cube.nodata;
  out.channels = static_cast<int>(keep.size());
  for (int idx : keep) out.schema.push_back(cube.schema[idx]);
  out.fire_channel_index = fire_channel_of(out.schema);
  out.raster.reserve(cube.dates.size() * keep.size() * cube.plane_size());
  for (int d = 0; d < cube.days(); ++d) {
    for (int idx : keep) {
      const auto p = cube.plane(d, idx);
      out.raster.insert(out.raster.end(), p.begin(), p.end());
    }
  }
  return out;
}

std::vector<WindowSample> window_samples(const FireEventCube& cube, int window, const FeatureSet& features) {
  if (window < 1) throw ConfigError("window length must be >= 1", "T");
  std::vector<WindowSample> samples;
  if (window >= cube.days()) return samples;
  const auto keep = selected_indices(cube.schema, features);
  ChannelSchema schema;
  for (int idx : keep) schema.push_back(cube.schema[idx]);
  const int fire_sel = fire_channel_of(schema);
  const std::size_t plane = cube.plane_size();

  for (int t = window; t < cube.days(); ++t) {
    // window days t-window .. t-1 and target t must be consecutive
    bool consecutive = true;
    for (int d = t - window; d < t; ++d) {
      if (cube.dates[d].days_until(cube.dates[d + 1]) != 1) consecutive = false;
    }
    if (!consecutive) continue;

    WindowSample s;
    s.valid.assign(plane, 1);
    std::size_t valid_count = plane;
    if (!cube.nodata.empty()) {
      valid_count = 0;
      for (std::size_t px = 0; px < plane; ++px) {
        s.valid[px] = cube.is_nodata(t, px) ? 0 : 1;
        valid_count += s.valid[px];
      }
    }
    if (valid_count == 0) continue;

    s.event_id = cube.event_id;
    s.year = cube.year;
    s.target_date = cube.dates[t];
    s.window = window;
    s.channels = static_cast<int>(keep.size());
    s.height = cube.height;
    s.width = cube.width;
    s.schema = schema;
    s.fire_channel = fire_sel;
    s.inputs.reserve(static_cast<std::size_t>(window) * keep.size() * plane);
    for (int d = t - window; d < t; ++d) {
      for (int idx : keep) {
        const auto p = cube.plane(d, idx);
        s.inputs.insert(s.inputs.end(), p.begin(), p.end());
      }
      s.day_of_year.push_back(std::min(cube.dates[d].day_of_year(), 365));
    }
    const auto fire = cube.plane(t, cube.fire_channel_index);
    s.target.resize(plane);
    std::size_t positives = 0;
    for (std::size_t px = 0; px < plane; ++px) {
      s.target[px] = fire[px] > 0.0f ? 1 : 0;
      if (s.valid[px]) positives += s.target[px];
    }
    s.prevalence = static_cast<double>(positives) / static_cast<double>(valid_count);
    samples.push_back(std::move(s));
  }
  return samples;
}

ChannelStats compute_channel_stats(std::span<const WindowSample> samples) {
  ChannelStats stats;
  if (samples.empty()) return stats;
  const int channels = samples.front().channels;
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0), count(channels, 0.0);
  for (const auto& s : samples) {
    if (s.channels != channels) throw ShapeError("samples disagree on channel count");
    for (int d = 0; d < s.window; ++d) {
      for (int c = 0; c < channels; ++c) {
        for (float v : s.plane(d, c)) {
          if (!std::isfinite(v)) continue;
          sum[c] += v;
          sq[c] += static_cast<double>(v) * v;
          count[c] += 1.0;
        }
      }
    }
  }
  const auto& schema = samples.front().schema;
  for (int c = 0; c < channels; ++c) {
    const double n = std::max(count[c], 1.0);
    const double mean = sum[c] / n;
    const double var = std::max(sq[c] / n - mean * mean, 0.0);
    stats.mean.push_back(mean);
    stats.stddev.push_back(std::sqrt(var));
    const bool pass = schema[c].categorical || schema[c].group == ChannelGroup::fire;
    stats.passthrough.push_back(pass);
  }
  return stats;
}

std::vector<WindowSample> normalize(std::vector<WindowSample> samples, const ChannelStats& stats,
                                    std::vector<std::string>* warnings) {
  if (samples.empty()) return samples;
  const int channels = samples.front().channels;
  if (static_cast<int>(stats.mean.size()) != channels) throw ShapeError("channel statistics do not match samples");
  std::vector<double> scale(channels, 1.0);
  for (int c = 0; c < channels; ++c) {
    if (stats.passthrough[c]) continue;
    if (stats.stddev[c] > 0.0) {
      scale[c] = 1.0 / stats.stddev[c];
    } else if (warnings) {
      warnings->push_back("channel '" + samples.front().schema[c].name +
                          "' has zero variance in training data; using std = 1");
    }
  }
  for (auto& s : samples) {
    for (int d = 0; d < s.window; ++d) {
      for (int c = 0; c < channels; ++c) {
        const bool pass = stats.passthrough[c];
        for (float& v : s.plane(d, c)) {
          if (!std::isfinite(v)) {
            v = 0.0f;
          } else if (!pass) {
            v = static_cast<float>((v - stats.mean[c]) * scale[c]);
          }
        }
      }
    }
  }
  return samples;
}

std::vector<int> Dataset::years() const {
  std::set<int> ys;
  for (const auto& e : events) ys.insert(e.year);
  return {ys.begin(), ys.end()};
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.root = root;
  ds.schema = read_schema(root / "schema.json");
  std::vector<fs::path> year_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) year_dirs.push_back(entry.path());
  }
  std::sort(year_dirs.begin(), year_dirs.end());
  for (const auto& ydir : year_dirs) {
    std::vector<fs::path> event_dirs;
    for (const auto& entry : fs::directory_iterator(ydir)) {
      if (entry.is_directory()) event_dirs.push_back(entry.path());
    }
    std::sort(event_dirs.begin(), event_dirs.end());
    for (const auto& edir : event_dirs) ds.events.push_back(load_event(edir, ds.schema));
  }
  return ds;
}

std::vector<WindowSample> dataset_samples(const Dataset& dataset, int window, const FeatureSet& features) {
  std::vector<WindowSample> all;
  for (const auto& e : dataset.events) {
    auto s = window_samples(e, window, features);
    std::move(s.begin(), s.end(), std::back_inserter(all));
  }
  return all;
}

}  // namespace wildfire
