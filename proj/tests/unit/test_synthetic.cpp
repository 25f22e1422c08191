#include <doctest.h>

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wildfire/errors.hpp"
#include "wildfire/objectives.hpp"
#include "wildfire/synthetic.hpp"

using namespace wildfire;
using wildfire::testing::small_synth;
using wildfire::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("same seed gives byte-identical directories") {
    TempDir a("syn_a"), b("syn_b");
    const auto cfg = small_synth({2018, 2019}, 2, 16);
    generate(cfg, a.path());
    generate(cfg, b.path());
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
      if (!e.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(e.path(), a.path());
      REQUIRE(std::filesystem::exists(b.path() / rel));
      CHECK(slurp(e.path()) == slurp(b.path() / rel));
      ++files;
    }
    CHECK(files == 1 + 2 * 2 * 10);
    const auto ds = load_dataset(a.path());
    CHECK(ds.events.size() == 4);
    CHECK(ds.years() == std::vector<int>{2018, 2019});
    CHECK(ds.schema == default_synth_schema());
  }

  TEST_CASE("different seeds differ") {
    auto cfg = small_synth({2018}, 1, 16);
    const auto a = generate_events(cfg);
    cfg.seed += 1;
    const auto b = generate_events(cfg);
    CHECK(a[0].raster != b[0].raster);
  }

  TEST_CASE("no ignition means no fire") {
    auto cfg = small_synth({2018, 2019}, 4, 16);
    cfg.years[0].ignition_rate = 0.0;
    const auto events = generate_events(cfg);
    for (const auto& e : events) {
      if (e.year != 2018) continue;
      for (int d = 0; d < e.days(); ++d) CHECK(e.fire_pixels(d) == 0);
    }
  }

  TEST_CASE("saturated moisture stops spread") {
    auto cfg = small_synth({2018}, 10, 32);
    cfg.years[0].covariate_shift["moisture"] = {1e6, 1.0};
    cfg.years[0].ignition_rate = 3.0;
    for (const auto& e : generate_events(cfg)) {
      std::vector<std::uint8_t> ever(e.plane_size(), 0);
      for (int d = 0; d < e.days(); ++d) {
        const auto f = e.plane(d, e.fire_channel_index);
        for (std::size_t i = 0; i < f.size(); ++i) ever[i] |= f[i] > 0;
      }
      // no burning pixel ever has a burning 8-neighbour that it did not start with
      for (int y = 0; y < e.height; ++y) {
        for (int x = 0; x < e.width; ++x) {
          if (!ever[static_cast<std::size_t>(y) * e.width + x]) continue;
          int neighbours = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int ny = y + dy, nx = x + dx;
              if ((dy || dx) && ny >= 0 && ny < e.height && nx >= 0 && nx < e.width)
                neighbours += ever[static_cast<std::size_t>(ny) * e.width + nx];
            }
          CHECK(neighbours <= 1);
        }
      }
    }
  }

  TEST_CASE("fires burn out after burn_days") {
    auto cfg = small_synth({2018}, 3, 32);
    for (const auto& e : generate_events(cfg)) {
      std::vector<int> run(e.plane_size(), 0), burned(e.plane_size(), 0);
      for (int d = 0; d < e.days(); ++d) {
        const auto f = e.plane(d, e.fire_channel_index);
        for (std::size_t i = 0; i < f.size(); ++i) {
          if (f[i] > 0) {
            CHECK(burned[i] == 0);
            ++run[i];
            CHECK(run[i] <= cfg.burn_days);
          } else if (run[i] > 0) {
            burned[i] = 1;
          }
        }
      }
    }
  }

  TEST_CASE("config validation and JSON mapping") {
    auto cfg = small_synth({2018}, 1);
    SUBCASE("zero concept shift") {
      cfg.years[0].concept_shift = 0.0;
      CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("negative ignition rate") {
      cfg.years[0].ignition_rate = -1.0;
      CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("size not divisible by 8") {
      cfg.height = 20;
      CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("shift on an unknown channel") {
      cfg.years[0].covariate_shift["rain"] = {1.0, 1.0};
      CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("round trip") {
      cfg.years[0].covariate_shift["vegetation"] = {0.2, 1.5};
      cfg.years[0].concept_shift = 2.0;
      const auto back = synth_config_from_json(to_json(cfg));
      CHECK(to_json(back) == to_json(cfg));
    }
    SUBCASE("unknown key names the field") {
      auto doc = to_json(cfg);
      doc["years"][0]["concept"] = 1.0;
      try {
        synth_config_from_json(doc);
        FAIL("expected ConfigError");
      } catch (const ConfigError& e) {
        CHECK(e.field().find("concept") != std::string::npos);
      }
    }
  }

  TEST_CASE("concept shift scales only environmental coefficients") {
    SpreadCoefficients base;
    SynthYearSpec y;
    y.concept_shift = 2.0;
    const auto k = effective_coefficients(base, y);
    CHECK(k.bias == base.bias);
    CHECK(k.neighbors == base.neighbors);
    CHECK(k.vegetation == 2.0 * base.vegetation);
    CHECK(k.moisture == 2.0 * base.moisture);
    CHECK(k.wind == 2.0 * base.wind);
  }

  TEST_CASE("persistence scores") {
    const auto events = generate_events(small_synth({2018}, 1, 16));
    auto samples = window_samples(events[0], 1, FeatureSet::named("All", events[0].schema));
    REQUIRE(!samples.empty());
    auto s = samples[0];
    const auto last = s.plane(0, s.fire_channel);
    SUBCASE("perfect persistence") {
      for (std::size_t i = 0; i < s.target.size(); ++i) s.target[i] = last[i] > 0;
      if (s.positive_pixels() == 0) s.plane(0, s.fire_channel)[3] = 1.0f, s.target[3] = 1;
      const auto scores = persistence_scores(s);
      const std::vector<double> sc(scores.begin(), scores.end());
      CHECK(average_precision(sc, s.target) == 1.0);
    }
    SUBCASE("nothing burning") {
      std::fill(s.target.begin(), s.target.end(), 0);
      for (auto& v : s.plane(0, s.fire_channel)) v = 0.0f;
      const auto scores = persistence_scores(s);
      const std::vector<double> sc(scores.begin(), scores.end());
      CHECK(std::isnan(average_precision(sc, s.target)));
    }
    SUBCASE("one pixel shift") {
      WindowSample w = s;
      w.height = w.width = 8;
      w.channels = 1;
      w.fire_channel = 0;
      w.inputs.assign(64, 0.0f);
      w.target.assign(64, 0);
      for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) {
          w.inputs[y * 8 + x] = 1.0f;
          w.target[y * 8 + x + 1] = 1;
        }
      const auto scores = persistence_scores(w);
      const std::vector<double> sc(scores.begin(), scores.end());
      // 6 of the 9 predicted pixels are hit: precision 6/9 at recall 6/9
      CHECK(average_precision(sc, w.target) == doctest::Approx(wildfire::testing::brute_force_ap(sc, w.target)));
      CHECK(average_precision(sc, w.target) == doctest::Approx(6.0 / 9.0 * 6.0 / 9.0 + 1.0 / 3.0 * 9.0 / 64.0));
    }
  }
}
