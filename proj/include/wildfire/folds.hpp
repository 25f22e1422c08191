#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wildfire/data.hpp"

namespace wildfire {

enum class Protocol { loyo, wsts_plus, random_event, cross_year };

std::string_view to_string(Protocol protocol);
Protocol parse_protocol(std::string_view text);

// Identifies one window sample: the event and the ISO target date.
struct SampleKey {
  std::string event_id;
  std::string target_date;

  auto operator<=>(const SampleKey&) const = default;
};

/// Train/validation/test assignment for one cross-validation fold.
///
/// Granularity depends on the protocol: years for loyo and wsts_plus,
/// events for random_event, samples for cross_year.
struct FoldPlan {
  int fold_id = 0;
  Protocol protocol = Protocol::loyo;
  std::vector<int> train_years, val_years, test_years;
  std::vector<std::string> train_events, val_events, test_events;
  std::vector<SampleKey> train_samples, val_samples, test_samples;

  // Throws ProtocolError on empty or overlapping sets.
  void validate() const;

  bool operator==(const FoldPlan&) const = default;
};

nlohmann::json to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& doc);

void write_fold_plans(const std::filesystem::path& dir, const std::vector<FoldPlan>& plans);
std::vector<FoldPlan> read_fold_plans(const std::filesystem::path& dir_or_file);

// All ordered (validation, test) year pairs; the rest train. Y(Y-1) folds.
std::vector<FoldPlan> loyo_folds(const std::vector<int>& years);

// Years are grouped into consecutive pairs (blocks). Fold i tests block i,
// validates on block (i + 2) mod B and trains on the others.
std::vector<FoldPlan> wsts_plus_folds(const std::vector<int>& years);

// Seeded event-level k-fold split; fold i validates on partition (i+1) mod k.
std::vector<FoldPlan> random_event_folds(const std::vector<std::string>& events, int k, std::uint64_t seed);

/// Minimal view of a windowed dataset used by the sample-level protocols.
struct DatasetIndex {
  struct Event {
    int year = 0;
    std::string event_id;
    std::vector<std::string> sample_dates;  // ISO target dates
  };
  std::vector<Event> events;

  static DatasetIndex from_samples(const std::vector<WindowSample>& samples);
};

/// Per-year fold plans for the cross-year experiment.
///
/// Each year holds out a test set of `val_quota` samples and contributes
/// another `val_quota` samples to a validation set shared by every year. Its
/// training set is min(train_cap, remaining samples). Test, validation and
/// training samples of a year come from disjoint events.
struct CrossYearPlan {
  std::map<int, FoldPlan> per_year;
  std::vector<SampleKey> shared_validation;
};

CrossYearPlan cross_year_protocol(const DatasetIndex& index, int val_quota, int train_cap, std::uint64_t seed);

}  // namespace wildfire
