#include "wildfire/folds.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"
#include "wildfire/json_util.hpp"
#include "wildfire/rng.hpp"

namespace wildfire {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::loyo: return "loyo";
    case Protocol::wsts_plus: return "wsts_plus";
    case Protocol::random_event: return "random_event";
    case Protocol::cross_year: return "cross_year";
  }
  return "loyo";
}

Protocol parse_protocol(std::string_view text) {
  for (auto p : {Protocol::loyo, Protocol::wsts_plus, Protocol::random_event, Protocol::cross_year}) {
    if (to_string(p) == text) return p;
  }
  throw ConfigError("unknown protocol '" + std::string(text) + "'", "protocol");
}

namespace {

template <typename T>
void check_disjoint(const std::vector<T>& a, const std::vector<T>& b, const char* what) {
  const std::set<T> sa(a.begin(), a.end());
  for (const auto& x : b) {
    if (sa.count(x)) throw ProtocolError(std::string("fold sets overlap (") + what + ")");
  }
}

template <typename T>
void check_sets(const std::vector<T>& train, const std::vector<T>& val, const std::vector<T>& test,
                const char* unit) {
  if (train.empty() || val.empty() || test.empty()) {
    throw ProtocolError(std::string("fold has an empty ") + unit + " set");
  }
  check_disjoint(train, val, "train/val");
  check_disjoint(train, test, "train/test");
  check_disjoint(val, test, "val/test");
}

json keys_to_json(const std::vector<SampleKey>& keys) {
  json arr = json::array();
  for (const auto& k : keys) arr.push_back({k.event_id, k.target_date});
  return arr;
}

std::vector<SampleKey> keys_from_json(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw ConfigError("field '" + field + "' must be an array", field);
  std::vector<SampleKey> keys;
  for (const auto& item : arr) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
      throw ConfigError("field '" + field + "' must hold [event_id, date] pairs", field);
    }
    keys.push_back({item[0].get<std::string>(), item[1].get<std::string>()});
  }
  return keys;
}

FoldPlan year_plan(int id, Protocol protocol, std::vector<int> train, std::vector<int> val, std::vector<int> test) {
  FoldPlan p;
  p.fold_id = id;
  p.protocol = protocol;
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  p.train_years = std::move(train);
  p.val_years = std::move(val);
  p.test_years = std::move(test);
  return p;
}

}  // namespace

void FoldPlan::validate() const {
  switch (protocol) {
    case Protocol::loyo:
    case Protocol::wsts_plus: check_sets(train_years, val_years, test_years, "year"); break;
    case Protocol::random_event: check_sets(train_events, val_events, test_events, "event"); break;
    case Protocol::cross_year: check_sets(train_samples, val_samples, test_samples, "sample"); break;
  }
}

json to_json(const FoldPlan& plan) {
  json doc = {{"fold_id", plan.fold_id}, {"protocol", std::string(to_string(plan.protocol))}};
  switch (plan.protocol) {
    case Protocol::loyo:
    case Protocol::wsts_plus:
      doc["train_years"] = plan.train_years;
      doc["val_years"] = plan.val_years;
      doc["test_years"] = plan.test_years;
      break;
    case Protocol::random_event:
      doc["train_events"] = plan.train_events;
      doc["val_events"] = plan.val_events;
      doc["test_events"] = plan.test_events;
      break;
    case Protocol::cross_year:
      doc["train_years"] = plan.train_years;
      doc["test_years"] = plan.test_years;
      doc["train_samples"] = keys_to_json(plan.train_samples);
      doc["val_samples"] = keys_to_json(plan.val_samples);
      doc["test_samples"] = keys_to_json(plan.test_samples);
      break;
  }
  return doc;
}

FoldPlan fold_plan_from_json(const json& doc) {
  ObjectReader r(doc);
  FoldPlan p;
  p.fold_id = r.required<int>("fold_id");
  p.protocol = parse_protocol(r.required<std::string>("protocol"));
  p.train_years = r.optional<std::vector<int>>("train_years", {});
  p.val_years = r.optional<std::vector<int>>("val_years", {});
  p.test_years = r.optional<std::vector<int>>("test_years", {});
  p.train_events = r.optional<std::vector<std::string>>("train_events", {});
  p.val_events = r.optional<std::vector<std::string>>("val_events", {});
  p.test_events = r.optional<std::vector<std::string>>("test_events", {});
  if (r.has("train_samples")) p.train_samples = keys_from_json(r.raw("train_samples"), "train_samples");
  if (r.has("val_samples")) p.val_samples = keys_from_json(r.raw("val_samples"), "val_samples");
  if (r.has("test_samples")) p.test_samples = keys_from_json(r.raw("test_samples"), "test_samples");
  r.finish();
  p.validate();
  return p;
}

void write_fold_plans(const fs::path& dir, const std::vector<FoldPlan>& plans) {
  fs::create_directories(dir);
  for (const auto& p : plans) {
    char name[32];
    std::snprintf(name, sizeof name, "fold_%02d.json", p.fold_id);
    std::ofstream out(dir / name);
    out << to_json(p).dump(2) << '\n';
    if (!out) throw Error("cannot write fold plan " + (dir / name).string());
  }
}

std::vector<FoldPlan> read_fold_plans(const fs::path& dir_or_file) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir_or_file)) {
    for (const auto& e : fs::directory_iterator(dir_or_file)) {
      if (e.is_regular_file() && e.path().extension() == ".json" &&
          e.path().filename().string().rfind("fold_", 0) == 0) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(dir_or_file)) {
    files.push_back(dir_or_file);
  }
  if (files.empty()) throw ConfigError("no fold plans found at " + dir_or_file.string(), "plan");
  std::vector<FoldPlan> plans;
  for (const auto& f : files) {
    std::ifstream in(f);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("fold plan " + f.string() + ": " + e.what(), "plan");
    }
    plans.push_back(fold_plan_from_json(doc));
  }
  std::sort(plans.begin(), plans.end(), [](const FoldPlan& a, const FoldPlan& b) { return a.fold_id < b.fold_id; });
  return plans;
}

std::vector<FoldPlan> loyo_folds(const std::vector<int>& years) {
  const std::set<int> unique(years.begin(), years.end());
  if (unique.size() != years.size()) throw ProtocolError("duplicate years in LOYO input");
  if (years.size() < 3) throw ProtocolError("leave-one-year-out needs at least 3 years so a training year remains");
  std::vector<FoldPlan> plans;
  int id = 0;
  for (int val : years) {
    for (int test : years) {
      if (val == test) continue;
      std::vector<int> train;
      for (int y : years) {
        if (y != val && y != test) train.push_back(y);
      }
      plans.push_back(year_plan(id++, Protocol::loyo, train, {val}, {test}));
    }
  }
  return plans;
}

std::vector<FoldPlan> wsts_plus_folds(const std::vector<int>& years) {
  if (years.size() % 2 != 0) throw ProtocolError("WSTS+ folds need an even number of years");
  std::vector<int> sorted = years;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] != sorted[i - 1] + 1) throw ProtocolError("WSTS+ folds need consecutive years");
  }
  const int blocks = static_cast<int>(sorted.size() / 2);
  if (blocks < 4) {
    throw ProtocolError("WSTS+ folds need at least 4 two-year blocks; with " + std::to_string(blocks) +
                        " no non-adjacent validation block exists for every test block");
  }
  auto block = [&](int b) { return std::vector<int>{sorted[2 * b], sorted[2 * b + 1]}; };
  std::vector<FoldPlan> plans;
  for (int i = 0; i < blocks; ++i) {
    const int v = (i + 2) % blocks;
    std::vector<int> train;
    for (int b = 0; b < blocks; ++b) {
      if (b == i || b == v) continue;
      const auto ys = block(b);
      train.insert(train.end(), ys.begin(), ys.end());
    }
    plans.push_back(year_plan(i, Protocol::wsts_plus, train, block(v), block(i)));
  }
  return plans;
}

std::vector<FoldPlan> random_event_folds(const std::vector<std::string>& events, int k, std::uint64_t seed) {
  if (k < 3) throw ProtocolError("random event folds need k >= 3 so that a training partition remains");
  if (static_cast<std::size_t>(k) > events.size()) {
    throw ProtocolError("k = " + std::to_string(k) + " exceeds the number of events (" +
                        std::to_string(events.size()) + ")");
  }
  std::vector<std::string> order = events;
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) throw ProtocolError("duplicate event ids");
  Rng rng(derive_seed(seed, 0x5eed));
  rng.shuffle(order);

  const std::size_t n = order.size();
  std::vector<std::vector<std::string>> parts(k);
  std::size_t pos = 0;
  for (int i = 0; i < k; ++i) {
    const std::size_t size = n / k + (static_cast<std::size_t>(i) < n % k ? 1 : 0);
    parts[i].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(parts[i].begin(), parts[i].end());
    pos += size;
  }
  std::vector<FoldPlan> plans;
  for (int i = 0; i < k; ++i) {
    FoldPlan p;
    p.fold_id = i;
    p.protocol = Protocol::random_event;
    p.test_events = parts[i];
    p.val_events = parts[(i + 1) % k];
    for (int j = 0; j < k; ++j) {
      if (j == i || j == (i + 1) % k) continue;
      p.train_events.insert(p.train_events.end(), parts[j].begin(), parts[j].end());
    }
    std::sort(p.train_events.begin(), p.train_events.end());
    plans.push_back(std::move(p));
  }
  return plans;
}

DatasetIndex DatasetIndex::from_samples(const std::vector<WindowSample>& samples) {
  DatasetIndex index;
  std::map<std::pair<int, std::string>, std::size_t> where;
  for (const auto& s : samples) {
    const auto key = std::make_pair(s.year, s.event_id);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, index.events.size()).first;
      index.events.push_back({s.year, s.event_id, {}});
    }
    index.events[it->second].sample_dates.push_back(s.target_date.iso());
  }
  return index;
}

namespace {

// Picks events (by position in `order`) whose sample counts sum exactly to
// `quota`, preferring earlier events. Empty result when no exact fill exists.
std::vector<std::size_t> exact_fill(const std::vector<std::size_t>& sizes, int quota) {
  const std::size_t n = sizes.size();
  // reach[i][s]: sum s reachable using events i..n-1
  std::vector<std::vector<char>> reach(n + 1, std::vector<char>(quota + 1, 0));
  reach[n][0] = 1;
  for (std::size_t i = n; i-- > 0;) {
    for (int s = 0; s <= quota; ++s) {
      reach[i][s] = reach[i + 1][s];
      if (!reach[i][s] && sizes[i] <= static_cast<std::size_t>(s)) reach[i][s] = reach[i + 1][s - sizes[i]];
    }
  }
  if (!reach[0][quota]) return {};
  std::vector<std::size_t> chosen;
  int s = quota;
  for (std::size_t i = 0; i < n && s > 0; ++i) {
    if (sizes[i] <= static_cast<std::size_t>(s) && reach[i + 1][s - sizes[i]]) {
      chosen.push_back(i);
      s -= static_cast<int>(sizes[i]);
    }
  }
  return chosen;
}

}  // namespace

CrossYearPlan cross_year_protocol(const DatasetIndex& index, int val_quota, int train_cap, std::uint64_t seed) {
  if (val_quota < 1) throw ProtocolError("validation quota must be >= 1");
  if (train_cap < 1) throw ProtocolError("training cap must be >= 1");
  std::map<int, std::vector<const DatasetIndex::Event*>> by_year;
  for (const auto& e : index.events) by_year[e.year].push_back(&e);

  CrossYearPlan plan;
  for (auto& [year, events] : by_year) {
    std::size_t total = 0;
    for (const auto* e : events) total += e->sample_dates.size();
    const auto infeasible = [&, year = year](const std::string& why) {
      return ProtocolError("year " + std::to_string(year) + ": quota of " + std::to_string(val_quota) +
                           " is infeasible (" + why + ")");
    };
    if (total <= 2 * static_cast<std::size_t>(val_quota)) {
      throw infeasible(std::to_string(total) + " samples cannot cover test and validation quotas plus training");
    }
    std::sort(events.begin(), events.end(),
              [](const auto* a, const auto* b) { return a->event_id < b->event_id; });
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(year), 0xc705));
    rng.shuffle(events);

    std::vector<char> used(events.size(), 0);
    // Takes exactly `val_quota` samples from whole unused events when an
    // exact fill exists, otherwise greedily with the last event truncated.
    auto take_quota = [&]() {
      std::vector<std::size_t> free_idx, sizes;
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (!used[i]) {
          free_idx.push_back(i);
          sizes.push_back(events[i]->sample_dates.size());
        }
      }
      auto chosen = exact_fill(sizes, val_quota);
      if (chosen.empty()) {
        std::size_t filled = 0;
        for (std::size_t j = 0; j < free_idx.size() && filled < static_cast<std::size_t>(val_quota); ++j) {
          chosen.push_back(j);
          filled += sizes[j];
        }
      }
      std::vector<SampleKey> keys;
      for (std::size_t j : chosen) {
        const std::size_t i = free_idx[j];
        used[i] = 1;
        for (const auto& d : events[i]->sample_dates) {
          if (keys.size() < static_cast<std::size_t>(val_quota)) keys.push_back({events[i]->event_id, d});
        }
      }
      return keys;
    };

    auto test = take_quota();
    if (test.size() < static_cast<std::size_t>(val_quota)) throw infeasible("not enough events for testing");
    auto val = take_quota();
    if (val.size() < static_cast<std::size_t>(val_quota)) throw infeasible("not enough events for validation");
    std::vector<SampleKey> train;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (used[i]) continue;
      for (const auto& d : events[i]->sample_dates) {
        if (train.size() < static_cast<std::size_t>(train_cap)) train.push_back({events[i]->event_id, d});
      }
    }
    if (train.empty()) throw infeasible("no event-disjoint training samples remain");
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    plan.shared_validation.insert(plan.shared_validation.end(), val.begin(), val.end());

    FoldPlan p;
    p.fold_id = year;
    p.protocol = Protocol::cross_year;
    p.train_years = {year};
    p.test_years = {year};
    p.train_samples = std::move(train);
    p.test_samples = std::move(test);
    plan.per_year[year] = std::move(p);
  }
  std::sort(plan.shared_validation.begin(), plan.shared_validation.end());
  for (auto& [year, p] : plan.per_year) p.val_samples = plan.shared_validation;
  return plan;
}

}  // namespace wildfire
