#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wildfire/data.hpp"
#include "wildfire/folds.hpp"
#include "wildfire/models.hpp"
#include "wildfire/training.hpp"

namespace wildfire {

/// Histogram over shared bin edges, stored as proportions.
struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<double> mass;    // sums to 1 (all zero when empty)
  std::size_t count = 0;
};

// Total-variation distance 0.5 * sum |p - q| between two histograms on the same edges.
double total_variation(const Histogram& a, const Histogram& b);

struct ChannelSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> quantiles;  // at DomainReport::quantile_levels
  Histogram histogram;
};

struct DomainReport {
  std::vector<int> years;
  std::vector<double> quantile_levels{0.05, 0.25, 0.5, 0.75, 0.95};
  std::vector<std::string> channels;  // continuous channels summarized
  std::map<int, std::map<std::string, ChannelSummary>> per_year;
  std::map<int, double> zero_fire_probability;
  std::map<int, std::map<int, double>> landcover;  // year -> class -> proportion
  std::vector<double> fire_size_edges;            // log10-spaced, shared
  std::map<int, Histogram> fire_sizes;            // non-zero sample fire sizes
  std::size_t balanced_events = 0;                // events kept per year
  bool cross_year = true;                         // false with a single year
  // Largest pairwise total-variation distance across years, per channel.
  std::map<std::string, double> max_tv_distance;
};

struct DomainReportOptions {
  int bins = 30;
  int fire_size_bins = 20;
};

DomainReport domain_report(const Dataset& dataset, std::uint64_t seed, const DomainReportOptions& options = {});
nlohmann::json to_json(const DomainReport& report);

/// Mean active-pixel trajectory after ignition, per year.
struct GrowthCurve {
  int year = 0;
  std::vector<double> mean;
  std::vector<double> ci_low, ci_high;  // mean -+ 1.96 * sd / sqrt(n)
  std::vector<int> n;                   // events contributing to each day
  bool no_fires = false;
  bool single_event = false;
};

std::vector<GrowthCurve> growth_curves(const Dataset& dataset, int horizon);
nlohmann::json to_json(const std::vector<GrowthCurve>& curves);

struct SizeBin {
  double low = 0.0, high = 0.0;
  int count = 0;
  double mean_ap = 0.0;  // NaN when empty
};

struct ApVsSize {
  std::vector<EventEvaluation> events;  // events with positive size and finite AP
  std::map<int, double> r_per_year;     // NaN when undefined
  double r_all = 0.0;
  std::vector<SizeBin> bins;
};

// Pearson correlation; NaN when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

ApVsSize ap_vs_size(const std::vector<EventEvaluation>& events, int bins = 30);
nlohmann::json to_json(const ApVsSize& result);

struct CrossYearMatrix {
  std::vector<int> years;
  std::vector<std::vector<double>> ap;  // [train][test], NaN for failed cells
  std::vector<double> row_mean, col_mean;
  std::vector<std::string> failures;
  double diagonal_mean = 0.0;
  double off_diagonal_mean = 0.0;
};

// Mean of the non-NaN entries; NaN when none.
double nan_mean(const std::vector<double>& values);

CrossYearMatrix cross_year_run(const std::vector<WindowSample>& samples, const CrossYearPlan& plan,
                               const ModelConfig& model_config, const TrainConfig& cfg, int parallel = 1);
nlohmann::json to_json(const CrossYearMatrix& matrix);

struct BandDiff {
  std::string name;
  double mean_a = 0.0, mean_b = 0.0;
  double std_a = 0.0, std_b = 0.0;
  double mean_rel_diff = 0.0;
  double std_rel_diff = 0.0;
};

struct DatasetDiff {
  std::vector<std::string> compared_events;
  std::vector<std::string> only_in_a, only_in_b;
  std::vector<BandDiff> bands;
  double max_rel_diff = 0.0;
  std::string max_band;
};

DatasetDiff dataset_diff(const std::filesystem::path& root_a, const std::filesystem::path& root_b);
nlohmann::json to_json(const DatasetDiff& diff);

struct EmbeddingRow {
  std::string event_id;
  std::string date;
  int year = 0;
  std::vector<double> features;
};

std::vector<EmbeddingRow> embedding_export(const Model<float>& model, const std::vector<WindowSample>& samples,
                                           int batch_size = 32);
void write_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path);

}  // namespace wildfire
