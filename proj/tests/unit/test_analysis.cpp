#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wildfire/analysis.hpp"
#include "wildfire/errors.hpp"

using namespace wildfire;
using wildfire::testing::make_cube;
using wildfire::testing::small_synth;
using wildfire::testing::TempDir;

namespace {

Dataset synth_dataset(SynthConfig cfg) {
  Dataset d;
  d.schema = default_synth_schema();
  d.events = generate_events(cfg);
  return d;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.encoder_widths = {4, 4, 8, 8};
  c.decoder_widths = {4, 4, 4};
  c.attention_heads = 2;
  return c;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("total variation") {
    Histogram a{{0, 1, 2}, {1.0, 0.0}, 4}, b{{0, 1, 2}, {0.25, 0.75}, 4};
    CHECK(total_variation(a, a) == 0.0);
    CHECK(total_variation(a, b) == doctest::Approx(0.75));
    Histogram c{{0, 1}, {1.0}, 1};
    CHECK_THROWS(total_variation(a, c));
  }

  TEST_CASE("identical year specs give small distances") {
    // wind is drawn per event, so this needs many events
    auto cfg = small_synth({2018, 2019}, 120, 8, 21);
    const auto report = domain_report(synth_dataset(cfg), 1, {10, 10});
    CHECK(report.cross_year);
    REQUIRE_FALSE(report.max_tv_distance.empty());
    for (const auto& [name, tv] : report.max_tv_distance) {
      CAPTURE(name);
      CHECK(tv < 0.1);
    }
    for (const auto& [y, classes] : report.landcover) {
      double sum = 0;
      for (const auto& [c, p] : classes) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const auto& [y, h] : report.fire_sizes) CHECK(h.edges == report.fire_size_edges);
  }

  TEST_CASE("covariate shift is visible on the shifted channel only") {
    auto cfg = small_synth({2018, 2019}, 10, 24, 21);
    const auto base = domain_report(synth_dataset(cfg), 1);
    const double sd = base.per_year.at(2018).at("vegetation").stddev;
    cfg.years[1].covariate_shift["vegetation"] = {1.5 * sd, 1.0};
    const auto shifted = domain_report(synth_dataset(cfg), 1);
    CHECK(shifted.max_tv_distance.at("vegetation") > 0.2);
    CHECK(shifted.max_tv_distance.at("elevation") < 0.1);
  }

  TEST_CASE("no ignitions means every target is empty") {
    auto cfg = small_synth({2018, 2019}, 3, 16);
    cfg.years[0].ignition_rate = 0.0;
    const auto ds = synth_dataset(cfg);
    const auto report = domain_report(ds, 1);
    CHECK(report.zero_fire_probability.at(2018) == 1.0);
    CHECK(report.zero_fire_probability.at(2019) < 1.0);
    CHECK(report.fire_sizes.at(2018).count == 0);
    const auto curves = growth_curves(ds, 5);
    CHECK(curves[0].no_fires);
  }

  TEST_CASE("years are balanced to the smallest event count") {
    auto ds = synth_dataset(small_synth({2018, 2019}, 5, 16));
    std::erase_if(ds.events, [](const FireEventCube& e) { return e.year == 2019 && e.event_id > "2019_002"; });
    REQUIRE(std::count_if(ds.events.begin(), ds.events.end(), [](auto& e) { return e.year == 2019; }) < 5);
    const auto report = domain_report(ds, 1);
    CHECK(report.balanced_events ==
          static_cast<std::size_t>(std::count_if(ds.events.begin(), ds.events.end(), [](auto& e) { return e.year == 2019; })));
    // same seed, same subsample
    CHECK(to_json(domain_report(ds, 1)) == to_json(report));
  }

  TEST_CASE("single-year report omits cross-year distances") {
    const auto report = domain_report(synth_dataset(small_synth({2018}, 2, 16)), 1);
    CHECK_FALSE(report.cross_year);
    CHECK(report.max_tv_distance.empty());
  }

  TEST_CASE("growth curves") {
    Dataset ds;
    ds.schema = default_synth_schema();
    ds.events = {make_cube(6, 16, 16, 1, 2020, "a"), make_cube(6, 16, 16, 2, 2020, "b"),
                 make_cube(6, 16, 16, 3, 2021, "c")};
    const auto curves = growth_curves(ds, 4);
    REQUIRE(curves.size() == 2);
    // the square has side 2d + 1 on day d
    for (int d = 0; d < 4; ++d) CHECK(curves[0].mean[d] == (2 * d + 1) * (2 * d + 1));
    CHECK(curves[0].mean[0] == 1.0);
    CHECK(curves[0].n[0] == 2);
    CHECK(curves[0].ci_low == curves[0].mean);
    CHECK_FALSE(curves[0].single_event);
    CHECK(curves[1].single_event);
    CHECK_THROWS_AS(growth_curves(ds, 1), ConfigError);
  }

  TEST_CASE("AP against log fire size") {
    std::vector<EventEvaluation> ev;
    for (int i = 0; i < 8; ++i) {
      const std::size_t size = 3u << i;
      ev.push_back({"e" + std::to_string(i), 2018 + i % 2, size, 0.1 + 0.05 * std::log10(double(size))});
    }
    ev.push_back({"empty", 2018, 0, 0.3});
    const auto r = ap_vs_size(ev, 4);
    CHECK(r.events.size() == 8);
    CHECK(r.r_all == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.r_per_year.at(2019) == doctest::Approx(1.0).epsilon(1e-12));
    int total = 0;
    for (const auto& b : r.bins) total += b.count;
    CHECK(total == 8);

    for (auto& e : ev) e.ap = 0.4;
    const auto flat = ap_vs_size(ev, 4);
    CHECK(std::isnan(flat.r_all));
    CHECK(to_json(flat).at("r_all_undefined") == true);
    CHECK_THROWS_AS(ap_vs_size({ev[0], ev[1]}), ProtocolError);
  }

  TEST_CASE("pearson") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
    CHECK(std::isnan(nan_mean({std::nan("")})));
    CHECK(nan_mean({1.0, std::nan(""), 3.0}) == 2.0);
  }

  TEST_CASE("two-year cross-year matrix") {
    auto cfg = small_synth({2018, 2019}, 4, 16, 8);
    for (auto& y : cfg.years) y.ignition_rate = 3.0;
    std::vector<WindowSample> samples;
    for (const auto& e : generate_events(cfg)) {
      auto s = window_samples(e, 1, FeatureSet::named("All", e.schema));
      samples.insert(samples.end(), s.begin(), s.end());
    }
    const auto plan = cross_year_protocol(DatasetIndex::from_samples(samples), 4, 6, 3);
    TrainConfig t;
    t.iterations = 2;
    t.batch_size = 2;
    t.eval_every = 1;
    const auto m = cross_year_run(samples, plan, tiny_model(), t);
    REQUIRE(m.ap.size() == 2);
    REQUIRE(m.ap[0].size() == 2);
    CHECK(m.failures.empty());
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(m.row_mean[i] == doctest::Approx((m.ap[i][0] + m.ap[i][1]) / 2));
      CHECK(m.col_mean[i] == doctest::Approx((m.ap[0][i] + m.ap[1][i]) / 2));
    }
    CHECK(m.diagonal_mean == doctest::Approx((m.ap[0][0] + m.ap[1][1]) / 2));
    CHECK(m.off_diagonal_mean == doctest::Approx((m.ap[0][1] + m.ap[1][0]) / 2));
    CHECK(to_json(m) == to_json(cross_year_run(samples, plan, tiny_model(), t, 2)));
  }

  TEST_CASE("dataset diff") {
    TempDir a("diff_a"), b("diff_b");
    const auto cfg = small_synth({2018}, 2, 16);
    generate(cfg, a.path());
    generate(cfg, b.path());
    auto same = dataset_diff(a.path(), b.path());
    CHECK(same.compared_events.size() == 2);
    CHECK(same.max_rel_diff == 0.0);

    // scale one band of every event in B by 1.001
    const auto ds = load_dataset(b.path());
    const int veg = channel_index(ds.schema, "vegetation");
    for (auto e : ds.events) {
      for (int d = 0; d < e.days(); ++d) {
        for (auto& v : e.plane(d, veg)) v *= 1.001f;
      }
      write_event(e, b / (std::to_string(e.year) + "/" + e.event_id));
    }
    const auto diff = dataset_diff(a.path(), b.path());
    CHECK(diff.max_band == "vegetation");
    CHECK(diff.max_rel_diff == doctest::Approx(0.001).epsilon(1e-3));
    CHECK(to_json(diff).at("max_rel_diff_percent").get<double>() == doctest::Approx(0.1).epsilon(1e-3));

    TempDir c("diff_c");
    generate(small_synth({2030}, 1, 16), c.path());
    CHECK_THROWS_AS(dataset_diff(a.path(), c.path()), LookupError);
  }

  TEST_CASE("embeddings") {
    const auto cube = make_cube(4, 16, 16);
    auto samples = window_samples(cube, 1, FeatureSet::named("All", cube.schema));
    samples = normalize(samples, compute_channel_stats(samples));
    samples.push_back(samples.front());
    const auto mc = tiny_model();
    const Model<float> model(mc, 4);
    const auto rows = embedding_export(model, samples, 2);
    REQUIRE(rows.size() == samples.size());
    CHECK(rows.front().features.size() == static_cast<std::size_t>(mc.encoder_widths.back()));
    CHECK(rows.front().features == rows.back().features);
    CHECK(rows.front().date == samples.front().target_date.iso());

    TempDir dir("emb");
    write_embeddings_csv(rows, dir / "e.csv");
    std::ifstream in(dir / "e.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "event_id,date,year,f0,f1,f2,f3,f4,f5,f6,f7");
  }
}
