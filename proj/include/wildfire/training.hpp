#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wildfire/data.hpp"
#include "wildfire/folds.hpp"
#include "wildfire/models.hpp"
#include "wildfire/objectives.hpp"

namespace wildfire {

enum class SelectionMetric { ap, f1 };

std::string_view to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(std::string_view text);

struct TrainConfig {
  int iterations = 2000;  // optimizer steps
  int batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  LossKind loss = LossKind::focal;
  SelectionMetric selection_metric = SelectionMetric::ap;
  std::uint64_t seed = 0;
  int eval_every = 200;
  // Focal alpha; unset derives it from training prevalence.
  std::optional<double> focal_alpha;
  double focal_gamma = 2.0;
  // BCE positive weight; unset uses (1 - p) / p clipped to [1, 100].
  std::optional<double> pos_weight;
  double dice_eps = 1.0;
  // Side of random square training crops (multiple of 8); 0 trains on full frames.
  int crop = 0;
  double f1_threshold = 0.5;
  int eval_batch_size = 32;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path = {});

/// Decoupled-weight-decay Adam.
template <typename S>
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::vector<nn::Var<S>> params, Options options);

  // One update from the gradients currently stored on the parameters.
  void step();
  long steps() const { return t_; }

 private:
  std::vector<nn::Var<S>> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

/// Validation metrics logged at one evaluation.
struct Evaluation {
  int step = 0;
  double ap = 0.0;
  double f1 = 0.0;
  double loss = 0.0;  // mean training loss since the previous evaluation
};

struct RunRecord {
  std::string config_hash;
  ModelConfig model;
  TrainConfig train;
  std::size_t parameter_count = 0;
  double train_prevalence = 0.0;
  double focal_alpha = 0.0;
  double pos_weight = 1.0;
  std::vector<Evaluation> evaluations;
  std::size_t best_index = 0;  // into evaluations, by train.selection_metric
  std::string best_checkpoint;  // empty when nothing was persisted
  double seconds = 0.0;
  bool aborted = false;
  int abort_step = -1;
  double abort_parameter_norm = 0.0;
  std::string abort_reason;
  // Filled by callers that evaluate on a test split.
  std::optional<double> test_ap;
  std::optional<double> test_f1;
};

// include_timing = false drops wall-clock fields and file paths so the
// output is reproducible byte for byte.
nlohmann::json to_json(const RunRecord& record, bool include_timing = true);

// Index of the evaluation maximizing the metric; ties go to the earliest,
// NaN never wins over a number.
std::size_t select_checkpoint(const RunRecord& record, SelectionMetric metric);

struct TrainResult {
  RunRecord record;
  // Parameters at each logged evaluation, parallel to record.evaluations.
  std::vector<ParameterSnapshot> snapshots;
  Model<float> model;  // left at the selected checkpoint

  // Loads the snapshot chosen by `metric` into `model`.
  void use_checkpoint(SelectionMetric metric);
};

struct TrainOptions {
  // When set, the selected checkpoint is written as <dir>/best.wfck.
  std::optional<std::filesystem::path> checkpoint_dir;
};

// Samples must already be normalized. Throws ProtocolError on empty splits.
TrainResult train_run(const ModelConfig& model_config, const std::vector<WindowSample>& train,
                      const std::vector<WindowSample>& val, const TrainConfig& cfg,
                      const TrainOptions& options = {});

/// Sigmoid scores over valid pixels, with labels and owning sample index.
struct Predictions {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint32_t> sample;
};

Predictions predict_scores(const Model<float>& model, const std::vector<WindowSample>& samples, int batch_size = 32);

// Binary map (score >= threshold) for one sample, H x W.
std::vector<std::uint8_t> predict(const Model<float>& model, const WindowSample& sample, double threshold = 0.5);

// Persistence baseline: tomorrow's fire is the last input day's fire mask.
Predictions persistence_scores(const std::vector<WindowSample>& samples);

struct EventEvaluation {
  std::string event_id;
  int year = 0;
  std::size_t fire_size = 0;  // positive target pixels over the event's samples
  double ap = 0.0;
};

/// Mean of per-sample APs; samples without positives are skipped and counted.
struct MacroAp {
  double mean = 0.0;  // NaN when no sample has positives
  std::size_t used = 0;
  std::size_t skipped = 0;
};

MacroAp macro_average_precision(const Predictions& predictions, std::size_t sample_count);

std::vector<EventEvaluation> per_event_ap(const Predictions& predictions, const std::vector<WindowSample>& samples);

/// Per-fold benchmark outcome.
struct FoldResult {
  int fold_id = 0;
  std::vector<int> test_years;
  bool completed = false;
  std::string error;
  double ap = 0.0;  // pooled over all valid test pixels
  MacroAp macro;
  double f1 = 0.0;
  double baseline_ap = 0.0;
  std::size_t parameter_count = 0;
  double seconds = 0.0;
  std::map<int, double> per_year_ap;
  std::vector<EventEvaluation> events;
  RunRecord record;
  // Test AP of the checkpoint the other metric would have selected.
  double ap_of_ap_selected = 0.0;
  double ap_of_f1_selected = 0.0;
};

struct EvalReport {
  ModelConfig model;
  TrainConfig train;
  std::string feature_set;
  std::vector<FoldResult> folds;
  int completed = 0;
  bool partial = false;
  bool single_fold = false;
  double mean_ap = 0.0;
  double std_ap = 0.0;  // sample standard deviation, 0 for one fold
  double mean_macro_ap = 0.0;
  double mean_baseline_ap = 0.0;
  std::map<int, std::vector<double>> per_year_ap;  // test year -> fold APs
  std::size_t parameter_count = 0;
  double seconds = 0.0;
};

nlohmann::json to_json(const EvalReport& report, bool include_timing = true);

// Writes report.json, metrics.json (no timing) and folds.csv.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

struct BenchmarkOptions {
  std::string feature_set = "All";
  int parallel = 1;
  // Per-fold run directories with checkpoints; unset keeps everything in memory.
  std::optional<std::filesystem::path> run_dir;
};

/// Training, validation and test samples of one fold, normalized with
/// training statistics.
struct FoldSplit {
  std::vector<WindowSample> train, val, test;
  ChannelStats stats;
  std::vector<std::string> warnings;
};

FoldSplit make_split(const FoldPlan& plan, const std::vector<WindowSample>& samples);

EvalReport run_benchmark(const ModelConfig& model_config, const std::vector<FoldPlan>& plans,
                         const std::vector<WindowSample>& samples, const TrainConfig& cfg,
                         const BenchmarkOptions& options = {});

struct GridSpec {
  std::vector<double> learning_rates{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  std::vector<LossKind> losses{LossKind::bce, LossKind::focal, LossKind::dice, LossKind::jaccard};
  std::vector<bool> pretraining{false, true};
  std::optional<std::string> pretrained_checkpoint;

  std::size_t size() const { return learning_rates.size() * losses.size() * pretraining.size(); }
};

nlohmann::json to_json(const GridSpec& grid);
GridSpec grid_spec_from_json(const nlohmann::json& doc, const std::string& path = {});

struct GridEntry {
  double learning_rate = 0.0;
  LossKind loss = LossKind::focal;
  bool pretraining = false;
  bool completed = false;
  std::string error;
  double best_val_ap = 0.0;
  RunRecord record;
};

// Entries sorted by best validation AP (descending); failed runs last,
// ties keep grid order.
std::vector<GridEntry> grid_search(const ModelConfig& model_config, const GridSpec& grid, const FoldPlan& fold,
                                   const std::vector<WindowSample>& samples, const TrainConfig& cfg,
                                   int parallel = 1);

nlohmann::json to_json(const std::vector<GridEntry>& ranking, bool include_timing = true);

// Runs jobs 0..count-1 on up to `parallel` threads; results are indexed by
// job so the merge order never depends on scheduling.
void parallel_for(int count, int parallel, const std::function<void(int)>& job);

}  // namespace wildfire
