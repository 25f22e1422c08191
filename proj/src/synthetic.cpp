#include "wildfire/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "wildfire/errors.hpp"
#include "wildfire/json_util.hpp"
#include "wildfire/rng.hpp"

namespace wildfire {

namespace fs = std::filesystem;
using nlohmann::json;

ChannelSchema default_synth_schema() {
  return {
      {"wind_u", ChannelGroup::weather, false, "m/s"},
      {"wind_v", ChannelGroup::weather, false, "m/s"},
      {"vegetation", ChannelGroup::vegetation, false, "index"},
      {"moisture", ChannelGroup::weather, false, "fraction"},
      {"elevation", ChannelGroup::topography, false, "m"},
      {"landcover", ChannelGroup::landcover, true, "class"},
      {"fire", ChannelGroup::fire, false, "binary"},
  };
}

void SynthConfig::validate() const {
  if (years.empty()) throw ConfigError("at least one year is required", "years");
  if (events_per_year < 1) throw ConfigError("events_per_year must be >= 1", "events_per_year");
  if (max_days < 2) throw ConfigError("max_days must be >= 2", "max_days");
  if (burn_days < 1) throw ConfigError("burn_days must be >= 1", "burn_days");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("height and width must be >= 8 and divisible by 8", height % 8 ? "height" : "width");
  }
  const ChannelSchema& s = schema.empty() ? default_synth_schema() : schema;
  validate_schema(s);
  for (const char* name : {"wind_u", "wind_v", "vegetation", "moisture", "elevation", "landcover", "fire"}) {
    if (std::none_of(s.begin(), s.end(), [&](const ChannelSpec& c) { return c.name == name; })) {
      throw ConfigError(std::string("schema must include channel '") + name + "'", "schema");
    }
  }
  std::set<int> labels;
  for (const auto& y : years) {
    if (!labels.insert(y.year_label).second) throw ConfigError("duplicate year label", "years.year_label");
    if (!(y.concept_shift > 0.0)) throw ConfigError("concept_shift must be > 0", "years.concept_shift");
    if (!(y.ignition_rate >= 0.0)) throw ConfigError("ignition_rate must be >= 0", "years.ignition_rate");
    for (const auto& [name, shift] : y.covariate_shift) {
      if (std::none_of(s.begin(), s.end(), [&](const ChannelSpec& c) { return c.name == name; })) {
        throw ConfigError("covariate shift on unknown channel '" + name + "'", "years.covariate_shift");
      }
      if (!(shift.scale > 0.0)) throw ConfigError("covariate scale must be > 0", "years.covariate_shift.scale");
    }
  }
}

SynthConfig synth_config_from_json(const json& doc) {
  ObjectReader r(doc);
  SynthConfig cfg;
  cfg.seed = r.optional<std::uint64_t>("seed", 0);
  cfg.events_per_year = r.optional<int>("events_per_year", cfg.events_per_year);
  cfg.height = r.optional<int>("height", cfg.height);
  cfg.width = r.optional<int>("width", cfg.width);
  cfg.max_days = r.optional<int>("max_days", cfg.max_days);
  cfg.burn_days = r.optional<int>("burn_days", cfg.burn_days);
  if (r.has("coefficients")) {
    ObjectReader c(r.raw("coefficients"), "coefficients");
    auto& k = cfg.coefficients;
    k.bias = c.optional<double>("bias", k.bias);
    k.vegetation = c.optional<double>("vegetation", k.vegetation);
    k.moisture = c.optional<double>("moisture", k.moisture);
    k.wind = c.optional<double>("wind", k.wind);
    k.neighbors = c.optional<double>("neighbors", k.neighbors);
    c.finish();
  }
  if (r.has("schema")) {
    const auto& arr = r.raw("schema");
    if (!arr.is_array()) throw ConfigError("field 'schema' must be an array", "schema");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader c(arr[i], "schema[" + std::to_string(i) + "]");
      ChannelSpec spec;
      spec.name = c.required<std::string>("name");
      spec.group = parse_channel_group(c.required<std::string>("group"));
      spec.categorical = c.optional<bool>("categorical", false);
      spec.units = c.optional<std::string>("units", "");
      c.finish();
      cfg.schema.push_back(spec);
    }
  }
  const auto& years = r.raw("years");
  if (!years.is_array()) throw ConfigError("field 'years' must be an array", "years");
  for (std::size_t i = 0; i < years.size(); ++i) {
    ObjectReader y(years[i], "years[" + std::to_string(i) + "]");
    SynthYearSpec spec;
    spec.year_label = y.required<int>("year_label");
    spec.concept_shift = y.optional<double>("concept_shift", spec.concept_shift);
    spec.ignition_rate = y.optional<double>("ignition_rate", spec.ignition_rate);
    if (y.has("covariate_shift")) {
      const auto& shifts = y.raw("covariate_shift");
      ObjectReader all(shifts, y.field("covariate_shift"));
      for (const auto& [name, value] : shifts.items()) {
        ObjectReader s(all.raw(name), all.field(name));
        ChannelShift shift;
        shift.offset = s.optional<double>("offset", 0.0);
        shift.scale = s.optional<double>("scale", 1.0);
        s.finish();
        spec.covariate_shift[name] = shift;
      }
    }
    y.finish();
    cfg.years.push_back(std::move(spec));
  }
  r.finish();
  if (cfg.schema.empty()) cfg.schema = default_synth_schema();
  cfg.validate();
  return cfg;
}

json to_json(const SynthConfig& cfg) {
  json years = json::array();
  for (const auto& y : cfg.years) {
    json shifts = json::object();
    for (const auto& [name, s] : y.covariate_shift) shifts[name] = {{"offset", s.offset}, {"scale", s.scale}};
    years.push_back({{"year_label", y.year_label},
                     {"concept_shift", y.concept_shift},
                     {"ignition_rate", y.ignition_rate},
                     {"covariate_shift", shifts}});
  }
  json schema = json::array();
  for (const auto& c : (cfg.schema.empty() ? default_synth_schema() : cfg.schema)) {
    schema.push_back({{"name", c.name},
                      {"group", std::string(to_string(c.group))},
                      {"categorical", c.categorical},
                      {"units", c.units}});
  }
  const auto& k = cfg.coefficients;
  return {{"seed", cfg.seed},
          {"events_per_year", cfg.events_per_year},
          {"height", cfg.height},
          {"width", cfg.width},
          {"max_days", cfg.max_days},
          {"burn_days", cfg.burn_days},
          {"coefficients",
           {{"bias", k.bias}, {"vegetation", k.vegetation}, {"moisture", k.moisture},
            {"wind", k.wind}, {"neighbors", k.neighbors}}},
          {"schema", schema},
          {"years", years}};
}

SpreadCoefficients effective_coefficients(const SpreadCoefficients& base, const SynthYearSpec& year) {
  SpreadCoefficients k = base;
  k.vegetation *= year.concept_shift;
  k.moisture *= year.concept_shift;
  k.wind *= year.concept_shift;
  return k;
}

namespace {

// Low-pass filtered white noise, standardized to zero mean and unit variance.
std::vector<double> smooth_field(int h, int w, Rng& rng, int radius = 4, int passes = 3) {
  std::vector<double> f(static_cast<std::size_t>(h) * w);
  for (auto& v : f) v = rng.normal();
  std::vector<double> tmp(f.size());
  for (int p = 0; p < passes; ++p) {
    // separable box blur with clamped borders
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += f[y * w + std::clamp(x + d, 0, w - 1)];
        tmp[y * w + x] = s / (2 * radius + 1);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += tmp[std::clamp(y + d, 0, h - 1) * w + x];
        f[y * w + x] = s / (2 * radius + 1);
      }
    }
  }
  double mean = 0.0, sq = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(f.size()));
  for (auto& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return f;
}

ChannelShift shift_for(const SynthYearSpec& year, const std::string& name) {
  const auto it = year.covariate_shift.find(name);
  return it == year.covariate_shift.end() ? ChannelShift{} : it->second;
}

FireEventCube generate_event(const SynthConfig& cfg, const SynthYearSpec& year, int index) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(year.year_label), static_cast<std::uint64_t>(index)));
  const int h = cfg.height, w = cfg.width, days = cfg.max_days;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const ChannelSchema& schema = cfg.schema.empty() ? default_synth_schema() : cfg.schema;
  const int ch_wind_u = channel_index(schema, "wind_u");
  const int ch_wind_v = channel_index(schema, "wind_v");
  const int ch_veg = channel_index(schema, "vegetation");
  const int ch_moist = channel_index(schema, "moisture");
  const int ch_elev = channel_index(schema, "elevation");
  const int ch_land = channel_index(schema, "landcover");
  const int ch_fire = fire_channel_of(schema);

  FireEventCube cube;
  cube.event_id = std::to_string(year.year_label) + "_" + (index < 10 ? "00" : index < 100 ? "0" : "") +
                  std::to_string(index);
  cube.year = year.year_label;
  cube.schema = schema;
  cube.channels = static_cast<int>(schema.size());
  cube.fire_channel_index = ch_fire;
  cube.height = h;
  cube.width = w;
  const Date start = Date(year.year_label, 1, 1).plus_days(150 + static_cast<int>(rng.below(100)));
  for (int d = 0; d < days; ++d) cube.dates.push_back(start.plus_days(d));
  cube.raster.assign(static_cast<std::size_t>(days) * cube.channels * plane, 0.0f);

  // Static fields (before covariate shift).
  const auto veg_noise = smooth_field(h, w, rng);
  const auto elev_noise = smooth_field(h, w, rng);
  const auto moist_noise = smooth_field(h, w, rng);
  const auto wind_u_noise = smooth_field(h, w, rng, 8);
  const auto wind_v_noise = smooth_field(h, w, rng, 8);
  const double wind_u0 = rng.normal(0.0, 1.5);
  const double wind_v0 = rng.normal(0.0, 1.5);

  const ChannelShift s_veg = shift_for(year, "vegetation");
  const ChannelShift s_moist = shift_for(year, "moisture");
  const ChannelShift s_wu = shift_for(year, "wind_u");
  const ChannelShift s_wv = shift_for(year, "wind_v");
  const ChannelShift s_elev = shift_for(year, "elevation");

  std::vector<double> veg(plane), landcover(plane), elevation(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double base = std::clamp(0.5 + 0.2 * veg_noise[i], 0.0, 1.0);
    veg[i] = base * s_veg.scale + s_veg.offset;
    landcover[i] = base < 0.35 ? 1.0 : base < 0.5 ? 2.0 : base < 0.65 ? 3.0 : 4.0;
    elevation[i] = (500.0 + 150.0 * elev_noise[i]) * s_elev.scale + s_elev.offset;
  }

  // Ignition schedule: Poisson count, days in the first third of the event.
  const int ignitions = rng.poisson(year.ignition_rate);
  const int ignition_window = std::max(1, days / 3);
  std::vector<std::vector<std::size_t>> ignite_on(days);
  for (int k = 0; k < ignitions; ++k) {
    const int day = static_cast<int>(rng.below(static_cast<std::uint64_t>(ignition_window)));
    const int y = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h - 8)));
    const int x = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - 8)));
    ignite_on[day].push_back(static_cast<std::size_t>(y) * w + x);
  }

  const SpreadCoefficients k = effective_coefficients(cfg.coefficients, year);
  // -1 unburnt, 0..burn_days-1 burning, burn_days burnt out
  std::vector<int> age(plane, -1);
  std::vector<double> moist(plane), wind_u(plane), wind_v(plane);
  for (int d = 0; d < days; ++d) {
    const double moist_day = 0.05 * rng.normal();
    const double wu_day = wind_u0 + 0.5 * rng.normal();
    const double wv_day = wind_v0 + 0.5 * rng.normal();
    for (std::size_t i = 0; i < plane; ++i) {
      moist[i] = (0.3 + 0.1 * moist_noise[i] + moist_day) * s_moist.scale + s_moist.offset;
      wind_u[i] = (wu_day + 0.3 * wind_u_noise[i]) * s_wu.scale + s_wu.offset;
      wind_v[i] = (wv_day + 0.3 * wind_v_noise[i]) * s_wv.scale + s_wv.offset;
    }
    for (std::size_t cell : ignite_on[d]) {
      if (age[cell] < 0) age[cell] = 0;
    }

    auto put = [&](int c, const std::vector<double>& values) {
      auto p = cube.plane(d, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>(values[i]);
    };
    put(ch_wind_u, wind_u);
    put(ch_wind_v, wind_v);
    put(ch_veg, veg);
    put(ch_moist, moist);
    put(ch_elev, elevation);
    put(ch_land, landcover);
    auto fire = cube.plane(d, ch_fire);
    for (std::size_t i = 0; i < plane; ++i) {
      fire[i] = (age[i] >= 0 && age[i] < cfg.burn_days) ? 1.0f : 0.0f;
    }

    // Advance to day d + 1.
    std::vector<int> next = age;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (age[i] >= 0) {
          if (age[i] < cfg.burn_days) next[i] = age[i] + 1;
          continue;
        }
        int burning = 0;
        double wind_term = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const int a = age[static_cast<std::size_t>(ny) * w + nx];
            if (a < 0 || a >= cfg.burn_days) continue;
            ++burning;
            // direction from the burning neighbour towards this cell
            const double norm = std::sqrt(static_cast<double>(dx * dx + dy * dy));
            wind_term += (wind_u[i] * (-dx) + wind_v[i] * (-dy)) / norm;
          }
        }
        if (burning == 0) continue;
        const double logit = k.bias + k.neighbors * burning + k.vegetation * veg[i] -
                             k.moisture * moist[i] + k.wind * wind_term;
        const double p = 1.0 / (1.0 + std::exp(-logit));
        if (rng.uniform() < p) next[i] = 0;
      }
    }
    age.swap(next);
  }
  return cube;
}

}  // namespace

std::vector<FireEventCube> generate_events(const SynthConfig& config) {
  SynthConfig cfg = config;
  if (cfg.schema.empty()) cfg.schema = default_synth_schema();
  cfg.validate();
  std::vector<FireEventCube> events;
  for (const auto& year : cfg.years) {
    for (int i = 0; i < cfg.events_per_year; ++i) events.push_back(generate_event(cfg, year, i));
  }
  return events;
}

void generate(const SynthConfig& config, const fs::path& root) {
  SynthConfig cfg = config;
  if (cfg.schema.empty()) cfg.schema = default_synth_schema();
  cfg.validate();
  fs::create_directories(root);
  write_schema(root / "schema.json", cfg.schema);
  for (const auto& year : cfg.years) {
    for (int i = 0; i < cfg.events_per_year; ++i) {
      const auto cube = generate_event(cfg, year, i);
      write_event(cube, root / std::to_string(cube.year) / cube.event_id);
    }
  }
}

std::vector<float> persistence_scores(const WindowSample& sample) {
  const auto last = sample.plane(sample.window - 1, sample.fire_channel);
  return {last.begin(), last.end()};
}

}  // namespace wildfire
