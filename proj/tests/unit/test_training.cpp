#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wildfire/errors.hpp"
#include "wildfire/training.hpp"

using namespace wildfire;
using wildfire::testing::small_synth;
using wildfire::testing::TempDir;
namespace nn = wildfire::nn;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.encoder_widths = {4, 4, 8, 8};
  c.decoder_widths = {4, 4, 4};
  c.attention_heads = 2;
  return c;
}

TrainConfig quick(int iterations = 6) {
  TrainConfig t;
  t.iterations = iterations;
  t.batch_size = 4;
  t.eval_every = 2;
  t.seed = 5;
  return t;
}

// Three synthetic years of 16x16 events, T = 1.
const std::vector<WindowSample>& corpus() {
  static const std::vector<WindowSample> samples = [] {
    auto cfg = small_synth({2018, 2019, 2020}, 3, 16, 8);
    for (auto& y : cfg.years) y.ignition_rate = 3.0;
    std::vector<WindowSample> all;
    for (const auto& e : generate_events(cfg)) {
      auto s = window_samples(e, 1, FeatureSet::named("All", e.schema));
      all.insert(all.end(), s.begin(), s.end());
    }
    return all;
  }();
  return samples;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>> train_val() {
  const auto split = make_split(loyo_folds({2018, 2019, 2020})[0], corpus());
  return {split.train, split.val};
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("AdamW matches the closed-form update") {
    // f(x) = sum (x - c)^2, gradient 2 (x - c)
    const std::vector<double> c{1.0, -2.0, 0.5};
    auto x = nn::parameter(nn::Tensor<double>({3}, std::vector<double>{0.3, 0.7, -1.1}));
    AdamW<double>::Options o;
    o.lr = 0.01;
    o.weight_decay = 0.1;
    AdamW<double> opt({x}, o);
    std::vector<double> ref = x->value.values(), m(3, 0.0), v(3, 0.0);
    for (int t = 1; t <= 3; ++t) {
      x->grad = nn::Tensor<double>({3});
      std::vector<double> g(3);
      for (int i = 0; i < 3; ++i) {
        x->grad[i] = 2 * (x->value[i] - c[i]);
        g[i] = 2 * (ref[i] - c[i]);
      }
      opt.step();
      for (int i = 0; i < 3; ++i) {
        ref[i] *= 1 - o.lr * o.weight_decay;
        m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[i];
        v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(o.beta1, t));
        const double vh = v[i] / (1 - std::pow(o.beta2, t));
        ref[i] -= o.lr * mh / (std::sqrt(vh) + o.eps);
        CHECK(std::abs(x->value[i] - ref[i]) < 1e-10);
      }
    }
    // first step moves each coordinate by lr against the gradient sign
    auto y = nn::parameter(nn::Tensor<double>({1}, std::vector<double>{2.0}));
    AdamW<double> one({y}, {0.1, 0.9, 0.999, 1e-8, 0.0});
    y->grad = nn::Tensor<double>({1}, std::vector<double>{6.0});
    one.step();
    CHECK(std::abs(y->value[0] - (2.0 - 0.1 * 6.0 / (6.0 + 1e-8))) < 1e-12);
  }

  TEST_CASE("checkpoint selection") {
    RunRecord r;
    for (double ap : {0.2, 0.5, 0.4}) r.evaluations.push_back({0, ap, 0.0, 0.0});
    CHECK(select_checkpoint(r, SelectionMetric::ap) == 1);
    r.evaluations = {{0, 0.1, 0.3, 0}, {0, 0.2, 0.3, 0}, {0, 0.3, 0.1, 0}};
    CHECK(select_checkpoint(r, SelectionMetric::ap) == 2);
    CHECK(select_checkpoint(r, SelectionMetric::f1) == 0);
    r.evaluations = {{0, std::nan(""), 0, 0}, {0, 0.1, 0, 0}, {0, 0.1, 0, 0}};
    CHECK(select_checkpoint(r, SelectionMetric::ap) == 1);
  }

  TEST_CASE("a single iteration evaluates once") {
    const auto [train, val] = train_val();
    auto cfg = quick(1);
    cfg.eval_every = 200;
    const auto run = train_run(tiny_model(), train, val, cfg);
    REQUIRE(run.record.evaluations.size() == 1);
    CHECK(run.record.evaluations[0].step == 1);
    CHECK(run.snapshots.size() == 1);
    CHECK_FALSE(run.record.aborted);
  }

  TEST_CASE("runs are deterministic and select the best evaluation") {
    const auto [train, val] = train_val();
    auto cfg = quick(6);
    cfg.crop = 8;
    TempDir dir("run");
    const auto a = train_run(tiny_model(), train, val, cfg, {dir.path()});
    const auto b = train_run(tiny_model(), train, val, cfg);
    CHECK(to_json(a.record, false) == to_json(b.record, false));
    const auto sa = snapshot(a.model), sb = snapshot(b.model);
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i].second.values() == sb[i].second.values());

    REQUIRE(a.record.evaluations.size() == 3);
    double best = -1;
    for (const auto& e : a.record.evaluations) best = std::max(best, e.ap);
    CHECK(a.record.evaluations[a.record.best_index].ap == best);
    // the persisted checkpoint is the selected one
    const auto disk = load_checkpoint(dir / "best.wfck");
    const auto sd = snapshot(disk);
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sd[i].second.values() == sa[i].second.values());
    CHECK(a.record.best_checkpoint == (dir / "best.wfck").string());

    auto other = cfg;
    other.seed = 6;
    CHECK(to_json(train_run(tiny_model(), train, val, other).record, false) != to_json(a.record, false));
  }

  TEST_CASE("non-finite loss aborts with a diagnostic") {
    auto [train, val] = train_val();
    for (auto& s : train) s.inputs[0] = std::nanf("");
    const auto run = train_run(tiny_model(), train, val, quick(4));
    CHECK(run.record.aborted);
    CHECK(run.record.abort_step == 1);
    CHECK(std::isfinite(run.record.abort_parameter_norm));
    CHECK(run.record.abort_parameter_norm > 0);
    CHECK(run.record.evaluations.empty());
    const auto doc = to_json(run.record);
    CHECK(doc.at("abort").at("step") == 1);
  }

  TEST_CASE("empty splits are rejected") {
    const auto [train, val] = train_val();
    CHECK_THROWS_AS(train_run(tiny_model(), {}, val, quick()), ProtocolError);
    CHECK_THROWS_AS(train_run(tiny_model(), train, {}, quick()), ProtocolError);
  }

  TEST_CASE("default loss weights come from training prevalence") {
    const auto [train, val] = train_val();
    const auto run = train_run(tiny_model(), train, val, quick(1));
    const double p = run.record.train_prevalence;
    CHECK(p > 0);
    CHECK(run.record.focal_alpha == doctest::Approx(alpha_from_prevalence(p)));
    CHECK(run.record.pos_weight == doctest::Approx(std::clamp((1 - p) / p, 1.0, 100.0)));
  }

  TEST_CASE("train config mapping") {
    TrainConfig t = quick();
    t.loss = LossKind::dice;
    t.selection_metric = SelectionMetric::f1;
    t.focal_alpha = 0.3;
    CHECK(train_config_from_json(to_json(t)) == t);
    auto doc = to_json(t);
    doc["learning_rate"] = 0.0;
    CHECK_THROWS_AS(train_config_from_json(doc), ConfigError);
    doc = to_json(t);
    doc["crop"] = 12;
    CHECK_THROWS_AS(train_config_from_json(doc), ConfigError);
    doc = to_json(t);
    doc["selection_metric"] = "IoU";
    try {
      train_config_from_json(doc, "train");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "train.selection_metric");
    }
  }

  TEST_CASE("split normalization uses training statistics") {
    const auto plan = loyo_folds({2018, 2019, 2020})[0];
    const auto split = make_split(plan, corpus());
    for (const auto& s : split.train) CHECK(s.year == plan.train_years[0]);
    for (const auto& s : split.test) CHECK(s.year == plan.test_years[0]);
    const auto stats = compute_channel_stats(
        [&] {
          std::vector<WindowSample> raw;
          for (const auto& s : corpus()) {
            if (s.year == plan.train_years[0]) raw.push_back(s);
          }
          return raw;
        }());
    CHECK(split.stats.mean == stats.mean);
  }

  TEST_CASE("benchmark aggregation") {
    const auto plans = loyo_folds({2018, 2019, 2020});
    const auto report = run_benchmark(tiny_model(), plans, corpus(), quick(2));
    REQUIRE(report.folds.size() == 6);
    CHECK(report.completed == 6);
    CHECK_FALSE(report.partial);
    std::vector<double> aps;
    for (const auto& f : report.folds) {
      CHECK(f.completed);
      aps.push_back(f.ap);
      CHECK(f.ap == doctest::Approx(f.ap_of_ap_selected));
    }
    double mean = 0;
    for (double a : aps) mean += a;
    mean /= aps.size();
    double ss = 0;
    for (double a : aps) ss += (a - mean) * (a - mean);
    CHECK(report.mean_ap == mean);
    CHECK(report.std_ap == std::sqrt(ss / (aps.size() - 1)));
    for (int y : {2018, 2019, 2020}) CHECK(report.per_year_ap.at(y).size() == 2);

    TempDir dir("report");
    write_report(report, dir.path());
    std::ifstream csv(dir / "folds.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "fold_id,test_years,ap,f1,baseline_ap,params,seconds");
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 6);
    const auto metrics = nlohmann::json::parse(std::ifstream(dir / "metrics.json"));
    CHECK(metrics.dump().find("seconds") == std::string::npos);
  }

  TEST_CASE("benchmark with one fold and with a failing fold") {
    const auto plans = loyo_folds({2018, 2019, 2020});
    const auto single = run_benchmark(tiny_model(), {plans[0]}, corpus(), quick(1));
    CHECK(single.single_fold);
    CHECK(single.std_ap == 0.0);

    FoldPlan broken = plans[1];
    broken.train_years = {2031};  // no samples
    const auto partial = run_benchmark(tiny_model(), {plans[0], broken}, corpus(), quick(1));
    CHECK(partial.partial);
    CHECK(partial.completed == 1);
    CHECK_FALSE(partial.folds[1].completed);
    CHECK_FALSE(partial.folds[1].error.empty());
    CHECK(partial.mean_ap == partial.folds[0].ap);
  }

  TEST_CASE("parallel benchmark merges by fold id") {
    const auto plans = loyo_folds({2018, 2019, 2020});
    BenchmarkOptions opt;
    opt.parallel = 3;
    const auto a = run_benchmark(tiny_model(), plans, corpus(), quick(2), opt);
    const auto b = run_benchmark(tiny_model(), plans, corpus(), quick(2));
    CHECK(to_json(a, false) == to_json(b, false));
  }

  TEST_CASE("grid search") {
    const auto plan = loyo_folds({2018, 2019, 2020})[0];
    GridSpec one;
    one.learning_rates = {1e-3};
    one.losses = {LossKind::focal};
    one.pretraining = {false};
    const auto ranking = grid_search(tiny_model(), one, plan, corpus(), quick(2));
    REQUIRE(ranking.size() == 1);
    CHECK(ranking[0].completed);

    GridSpec twice = one;
    twice.learning_rates = {1e-3, 1e-3};
    const auto r2 = grid_search(tiny_model(), twice, plan, corpus(), quick(2));
    REQUIRE(r2.size() == 2);
    CHECK(r2[0].best_val_ap == r2[1].best_val_ap);
    CHECK(to_json(r2[0].record, false)["evaluations"] == to_json(r2[1].record, false)["evaluations"]);

    CHECK(GridSpec{}.size() == 40);
    GridSpec pre = one;
    pre.pretraining = {true};
    const auto failed = grid_search(tiny_model(), pre, plan, corpus(), quick(1));
    REQUIRE(failed.size() == 1);
    CHECK_FALSE(failed[0].completed);
  }

  TEST_CASE("macro AP skips samples without positives") {
    Predictions p;
    p.scores = {0.9, 0.1, 0.8, 0.2, 0.3, 0.4};
    p.labels = {1, 0, 0, 1, 0, 0};
    p.sample = {0, 0, 1, 1, 2, 2};
    const auto m = macro_average_precision(p, 3);
    CHECK(m.used == 2);
    CHECK(m.skipped == 1);
    CHECK(m.mean == doctest::Approx((1.0 + 0.5) / 2));
  }
}
