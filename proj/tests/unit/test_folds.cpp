#include <doctest.h>

#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wildfire/errors.hpp"
#include "wildfire/folds.hpp"

using namespace wildfire;
using wildfire::testing::TempDir;

namespace {

template <typename T>
bool disjoint(const std::vector<T>& a, const std::vector<T>& b) {
  std::set<T> s(a.begin(), a.end());
  for (const auto& x : b) {
    if (s.count(x)) return false;
  }
  return true;
}

// Events with the given sample counts, all in one year.
DatasetIndex index_with(int year, const std::vector<int>& counts, const std::string& prefix = "e") {
  DatasetIndex idx;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    DatasetIndex::Event e;
    e.year = year;
    e.event_id = prefix + std::to_string(year) + "_" + std::to_string(i);
    for (int k = 0; k < counts[i]; ++k) e.sample_dates.push_back(Date(year, 6, 1).plus_days(k).iso());
    idx.events.push_back(e);
  }
  return idx;
}

}  // namespace

TEST_SUITE("folds") {
  TEST_CASE("leave-one-year-out enumerates ordered pairs") {
    const auto plans = loyo_folds({2018, 2019, 2020, 2021});
    REQUIRE(plans.size() == 12);
    std::set<std::pair<int, int>> pairs;
    std::map<int, int> tested;
    for (const auto& p : plans) {
      REQUIRE(p.val_years.size() == 1);
      REQUIRE(p.test_years.size() == 1);
      CHECK(p.train_years.size() == 2);
      CHECK(disjoint(p.train_years, p.val_years));
      CHECK(disjoint(p.train_years, p.test_years));
      CHECK(disjoint(p.val_years, p.test_years));
      pairs.insert({p.val_years[0], p.test_years[0]});
      ++tested[p.test_years[0]];
    }
    CHECK(pairs.size() == 12);
    for (const auto& [y, n] : tested) CHECK(n == 3);
    CHECK(loyo_folds({2018, 2019, 2020}).size() == 6);
    CHECK_THROWS_AS(loyo_folds({2018, 2019}), ProtocolError);
  }

  TEST_CASE("WSTS+ blocks") {
    const auto plans = wsts_plus_folds({2016, 2017, 2018, 2019, 2020, 2021, 2022, 2023});
    REQUIRE(plans.size() == 4);
    CHECK(plans[0].test_years == std::vector<int>{2016, 2017});
    CHECK(plans[0].val_years == std::vector<int>{2020, 2021});
    CHECK(plans[0].train_years == std::vector<int>{2018, 2019, 2022, 2023});
    std::map<int, int> tested;
    for (const auto& p : plans) {
      CHECK(disjoint(p.train_years, p.val_years));
      CHECK(disjoint(p.train_years, p.test_years));
      CHECK(disjoint(p.val_years, p.test_years));
      // blocks are never adjacent in either direction
      const int tb = (p.test_years[0] - 2016) / 2, vb = (p.val_years[0] - 2016) / 2;
      CHECK(std::abs(tb - vb) != 1);
      for (int y : p.test_years) ++tested[y];
    }
    CHECK(tested.size() == 8);
    for (const auto& [y, n] : tested) CHECK(n == 1);
    CHECK_THROWS_AS(wsts_plus_folds({2016, 2017, 2018, 2019, 2020, 2021}), ProtocolError);
    CHECK_THROWS_AS(wsts_plus_folds({2016, 2017, 2018, 2019, 2020, 2021, 2022}), ProtocolError);
  }

  TEST_CASE("random event folds") {
    std::vector<std::string> ten;
    for (int i = 0; i < 10; ++i) ten.push_back("ev" + std::to_string(i));
    const auto plans = random_event_folds(ten, 4, 42);
    REQUIRE(plans.size() == 4);
    std::multiset<std::size_t> sizes;
    std::map<std::string, int> tested;
    for (const auto& p : plans) {
      sizes.insert(p.test_events.size());
      for (const auto& e : p.test_events) ++tested[e];
      CHECK(disjoint(p.train_events, p.val_events));
      CHECK(disjoint(p.train_events, p.test_events));
      CHECK(disjoint(p.val_events, p.test_events));
      CHECK(p.train_events.size() + p.val_events.size() + p.test_events.size() == 10);
    }
    CHECK(sizes == std::multiset<std::size_t>{2, 2, 3, 3});
    CHECK(tested.size() == 10);
    for (const auto& [e, n] : tested) CHECK(n == 1);
    CHECK(random_event_folds(ten, 4, 42) == plans);
    CHECK(random_event_folds(ten, 4, 43) != plans);

    std::vector<std::string> eight(ten.begin(), ten.begin() + 8);
    std::map<std::string, int> once;
    for (const auto& p : random_event_folds(eight, 4, 1))
      for (const auto& e : p.test_events) ++once[e];
    CHECK(once.size() == 8);
    CHECK_THROWS_AS(random_event_folds(eight, 9, 1), ProtocolError);
  }

  TEST_CASE("cross-year quotas") {
    DatasetIndex idx;
    for (int y : {2018, 2019, 2020}) {
      const auto part = index_with(y, {5, 5, 5, 5, 5, 5, 5, 5});
      idx.events.insert(idx.events.end(), part.events.begin(), part.events.end());
    }
    const auto plan = cross_year_protocol(idx, 10, 2000, 7);
    CHECK(plan.shared_validation.size() == 30);
    REQUIRE(plan.per_year.size() == 3);
    for (const auto& [year, p] : plan.per_year) {
      CHECK(p.test_samples.size() == 10);
      CHECK(p.train_samples.size() == 20);
      CHECK(p.val_samples == plan.shared_validation);
      std::set<std::string> train_ev, test_ev, val_ev;
      for (const auto& k : p.train_samples) train_ev.insert(k.event_id);
      for (const auto& k : p.test_samples) test_ev.insert(k.event_id);
      for (const auto& k : plan.shared_validation) val_ev.insert(k.event_id);
      for (const auto& e : train_ev) {
        CHECK(test_ev.count(e) == 0);
        CHECK(val_ev.count(e) == 0);
      }
      for (const auto& e : test_ev) CHECK(val_ev.count(e) == 0);
    }
    const auto capped = cross_year_protocol(idx, 10, 7, 7);
    for (const auto& [year, p] : capped.per_year) CHECK(p.train_samples.size() == 7);
    CHECK(cross_year_protocol(idx, 10, 2000, 7).shared_validation == plan.shared_validation);
  }

  TEST_CASE("cross-year feasibility") {
    // 12 samples cannot hold a test quota and a validation quota of 10
    try {
      cross_year_protocol(index_with(2019, {4, 4, 4}), 10, 2000, 1);
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      CHECK(std::string(e.what()).find("2019") != std::string::npos);
    }
    // 22 samples in events of 10, 10 and 2 leave exactly 2 for training
    const auto plan = cross_year_protocol(index_with(2019, {10, 10, 2}), 10, 2000, 1);
    CHECK(plan.per_year.at(2019).train_samples.size() == 2);
  }

  TEST_CASE("JSON round trip and plan files") {
    TempDir dir("plans");
    std::vector<FoldPlan> all = loyo_folds({2018, 2019, 2020});
    const auto ev = random_event_folds({"a", "b", "c", "d"}, 3, 2);
    all.insert(all.end(), ev.begin(), ev.end());
    const auto cy = cross_year_protocol(index_with(2018, {3, 3, 3, 3}), 3, 100, 5);
    all.push_back(cy.per_year.at(2018));
    for (const auto& p : all) CHECK(fold_plan_from_json(to_json(p)) == p);

    const auto loyo = loyo_folds({2018, 2019, 2020, 2021});
    write_fold_plans(dir.path(), loyo);
    const auto back = read_fold_plans(dir.path());
    CHECK(back == loyo);
  }

  TEST_CASE("plan validation") {
    FoldPlan p = loyo_folds({2018, 2019, 2020})[0];
    CHECK_NOTHROW(p.validate());
    p.val_years = p.test_years;
    CHECK_THROWS_AS(p.validate(), ProtocolError);
    p = loyo_folds({2018, 2019, 2020})[0];
    p.train_years.clear();
    CHECK_THROWS_AS(p.validate(), ProtocolError);
    CHECK_THROWS_AS(parse_protocol("kfold"), ConfigError);
  }
}
