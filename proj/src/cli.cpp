#include "wildfire/cli.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wildfire/analysis.hpp"
#include "wildfire/errors.hpp"
#include "wildfire/folds.hpp"
#include "wildfire/json_util.hpp"
#include "wildfire/log.hpp"
#include "wildfire/models.hpp"
#include "wildfire/synthetic.hpp"
#include "wildfire/training.hpp"

namespace wildfire {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Failure that happens before any work starts because an input is missing.
struct InputError : ConfigError {
  using ConfigError::ConfigError;
};

std::string version_text() {
  std::ostringstream s;
  s << "wildfire " << kToolVersion << " (checkpoint format " << kCheckpointFormat << ", schema format "
    << kSchemaFormat << ", report format " << kReportFormat << ")";
  return s.str();
}

json read_json_file(const fs::path& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path.string() + "'", field);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what(), field);
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("cannot write " + path.string());
}

fs::path require_path(const fs::path& p, const std::string& field) {
  if (!fs::exists(p)) throw InputError("path '" + p.string() + "' given by '" + field + "' does not exist", field);
  return p;
}

/// Flags shared by every command.
struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  int parallel = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_flag("--quiet", c.quiet, "Only print errors");
  cmd->add_option("--parallel", c.parallel, "Independent runs executed concurrently")->check(CLI::PositiveNumber);
}

// Loads --config (or {}) and applies flag overrides for out and seed.
json base_config(const Common& c) {
  json cfg = c.config.empty() ? json::object() : read_json_file(c.config, "--config");
  if (!cfg.is_object()) throw ConfigError("configuration must be a JSON object", "--config");
  if (c.out) cfg["out"] = *c.out;
  if (c.seed) cfg["seed"] = *c.seed;
  return cfg;
}

// Removes and returns the output directory key.
fs::path take_out(json& cfg) {
  if (!cfg.contains("out") || !cfg["out"].is_string() || cfg["out"].get<std::string>().empty()) {
    throw ConfigError("missing required field 'out' (or --out)", "out");
  }
  fs::path out = cfg["out"].get<std::string>();
  cfg.erase("out");
  return out;
}

void write_run_files(const fs::path& out, const std::string& command, json resolved,
                     const std::vector<std::string>& args) {
  fs::create_directories(out);
  resolved["out"] = out.string();
  write_json(out / "resolved_config.json", resolved);
  write_json(out / "provenance.json", {{"tool", "wildfire"},
                                       {"version", std::string(kToolVersion)},
                                       {"checkpoint_format", kCheckpointFormat},
                                       {"schema_format", kSchemaFormat},
                                       {"report_format", kReportFormat},
                                       {"command", command},
                                       {"argv", args}});
}

// "model" may be an inline object or a path to a JSON file.
json model_json(const json& value) {
  if (value.is_string()) return read_json_file(value.get<std::string>(), "model");
  return value;
}

/// Dataset inputs shared by the training commands.
struct DataInputs {
  fs::path data;
  std::string feature_set = "All";
  ModelConfig model;
  TrainConfig train;
  std::vector<WindowSample> samples;
};

// Reads data / feature_set / model / train / seed from the config. in_channels
// defaults to the feature-set size when the model config omits it.
DataInputs read_data_inputs(ObjectReader& r, json& resolved, bool with_train, bool load_samples = true) {
  DataInputs in;
  in.data = require_path(r.required<std::string>("data"), "data");
  in.feature_set = r.optional<std::string>("feature_set", "All");
  const auto schema = read_schema(in.data / "schema.json");
  FeatureSet fset;
  try {
    fset = FeatureSet::named(in.feature_set, schema);
  } catch (const Error& e) {
    throw ConfigError(e.what(), "feature_set");
  }
  json mj = r.has("model") ? model_json(r.raw("model")) : json::object();
  if (!mj.is_object()) throw ConfigError("field 'model' must be an object or a file path", "model");
  if (!mj.contains("in_channels")) mj["in_channels"] = static_cast<int>(fset.channel_names.size());
  in.model = model_config_from_json(mj, "model");
  if (in.model.in_channels != static_cast<int>(fset.channel_names.size())) {
    throw ConfigError("model.in_channels is " + std::to_string(in.model.in_channels) + " but feature set '" +
                          in.feature_set + "' has " + std::to_string(fset.channel_names.size()) + " channels",
                      "model.in_channels");
  }
  resolved["data"] = in.data.string();
  resolved["feature_set"] = in.feature_set;
  resolved["model"] = to_json(in.model);
  if (with_train) {
    in.train = r.has("train") ? train_config_from_json(r.raw("train"), "train") : TrainConfig{};
    if (r.has("seed")) in.train.seed = r.required<std::uint64_t>("seed");
    resolved["train"] = to_json(in.train);
    resolved["seed"] = in.train.seed;
  }
  if (load_samples) {
    const auto dataset = load_dataset(in.data);
    in.samples = dataset_samples(dataset, in.model.window, fset);
    if (in.samples.empty()) throw ConfigError("dataset yields no samples for T = " + std::to_string(in.model.window), "data");
  }
  return in;
}

std::vector<FoldPlan> read_plans(ObjectReader& r, json& resolved) {
  const fs::path plan = require_path(r.required<std::string>("plan"), "plan");
  resolved["plan"] = plan.string();
  auto plans = read_fold_plans(plan);
  if (plans.empty()) throw ConfigError("no fold plans found in '" + plan.string() + "'", "plan");
  return plans;
}

FoldPlan pick_fold(ObjectReader& r, json& resolved, const std::vector<FoldPlan>& plans) {
  const int fold = r.optional<int>("fold", plans.front().fold_id);
  resolved["fold"] = fold;
  for (const auto& p : plans) {
    if (p.fold_id == fold) return p;
  }
  throw ConfigError("no fold with id " + std::to_string(fold), "fold");
}

json stats_json(const ChannelStats& s, const ChannelSchema& schema) {
  std::vector<std::string> names;
  for (const auto& c : schema) names.push_back(c.name);
  std::vector<int> pass(s.passthrough.begin(), s.passthrough.end());
  return {{"channels", names}, {"mean", s.mean}, {"stddev", s.stddev}, {"passthrough", pass}};
}

ChannelStats stats_from_json(const json& doc) {
  ObjectReader r(doc, "stats");
  ChannelStats s;
  r.required<std::vector<std::string>>("channels");
  s.mean = r.required<std::vector<double>>("mean");
  s.stddev = r.required<std::vector<double>>("stddev");
  for (int p : r.required<std::vector<int>>("passthrough")) s.passthrough.push_back(p != 0);
  r.finish();
  return s;
}

// ---------------------------------------------------------------------------
// commands; each returns the resolved configuration it ran with

using Command = std::function<void(json& cfg, json& resolved, const fs::path& out, const Common& common)>;

void cmd_synth(json& cfg, json& resolved, const fs::path& out, const Common&) {
  const auto config = synth_config_from_json(cfg);
  resolved = to_json(config);
  generate(config, out);
}

void cmd_folds(json& cfg, json& resolved, const fs::path& out, const Common&) {
  ObjectReader r(cfg);
  Protocol protocol;
  try {
    protocol = parse_protocol(r.required<std::string>("protocol"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what(), "protocol");
  }
  resolved["protocol"] = std::string(to_string(protocol));
  const auto seed = r.optional<std::uint64_t>("seed", 0);
  const int k = r.optional<int>("k", 5);
  const int window = r.optional<int>("window", 1);
  const int val_quota = r.optional<int>("val_quota", 10);
  const int train_cap = r.optional<int>("train_cap", 1000);
  std::optional<fs::path> data;
  if (r.has("data")) data = require_path(r.required<std::string>("data"), "data");
  std::vector<int> years = r.optional<std::vector<int>>("years", {});
  r.finish();
  resolved["seed"] = seed;
  if (data) resolved["data"] = data->string();

  std::optional<Dataset> dataset;
  auto need_data = [&]() -> const Dataset& {
    if (!data) throw ConfigError("protocol '" + std::string(to_string(protocol)) + "' needs 'data'", "data");
    if (!dataset) dataset = load_dataset(*data);
    return *dataset;
  };
  std::vector<FoldPlan> plans;
  switch (protocol) {
    case Protocol::loyo:
    case Protocol::wsts_plus:
      if (years.empty()) years = need_data().years();
      resolved["years"] = years;
      plans = protocol == Protocol::loyo ? loyo_folds(years) : wsts_plus_folds(years);
      break;
    case Protocol::random_event: {
      std::vector<std::string> events;
      for (const auto& e : need_data().events) events.push_back(e.event_id);
      resolved["k"] = k;
      plans = random_event_folds(events, k, seed);
      break;
    }
    case Protocol::cross_year: {
      const auto& ds = need_data();
      FeatureSet fire_only{"fire", {ds.schema[fire_channel_of(ds.schema)].name}};
      const auto index = DatasetIndex::from_samples(dataset_samples(ds, window, fire_only));
      resolved["window"] = window;
      resolved["val_quota"] = val_quota;
      resolved["train_cap"] = train_cap;
      const auto cy = cross_year_protocol(index, val_quota, train_cap, seed);
      for (const auto& [y, p] : cy.per_year) plans.push_back(p);
      break;
    }
  }
  write_fold_plans(out, plans);
}

void cmd_train(json& cfg, json& resolved, const fs::path& out, const Common&) {
  ObjectReader r(cfg);
  auto in = read_data_inputs(r, resolved, true);
  const auto plans = read_plans(r, resolved);
  const auto plan = pick_fold(r, resolved, plans);
  r.finish();
  auto split = make_split(plan, in.samples);
  for (const auto& w : split.warnings) log_warning(w);
  fs::create_directories(out);
  write_json(out / "stats.json", stats_json(split.stats, split.train.front().schema));
  TrainOptions opt;
  opt.checkpoint_dir = out;
  auto run = train_run(in.model, split.train, split.val, in.train, opt);
  if (run.record.aborted) throw Error(run.record.abort_reason);
  const auto pred = predict_scores(run.model, split.test, in.train.eval_batch_size);
  run.record.test_ap = average_precision(pred.scores, pred.labels);
  run.record.test_f1 = f1_at_threshold(pred.scores, pred.labels, in.train.f1_threshold);
  write_json(out / "run_record.json", to_json(run.record, true));
  write_json(out / "metrics.json", to_json(run.record, false));
}

void cmd_gridsearch(json& cfg, json& resolved, const fs::path& out, const Common& common) {
  ObjectReader r(cfg);
  auto in = read_data_inputs(r, resolved, true);
  const auto plans = read_plans(r, resolved);
  const auto plan = pick_fold(r, resolved, plans);
  const GridSpec grid = r.has("grid") ? grid_spec_from_json(r.raw("grid"), "grid") : GridSpec{};
  r.finish();
  resolved["grid"] = to_json(grid);
  if (grid.pretrained_checkpoint) require_path(*grid.pretrained_checkpoint, "grid.pretrained_checkpoint");
  const auto ranking = grid_search(in.model, grid, plan, in.samples, in.train, common.parallel);
  fs::create_directories(out);
  write_json(out / "ranking.json", to_json(ranking, true));
  write_json(out / "metrics.json", to_json(ranking, false));
}

void cmd_benchmark(json& cfg, json& resolved, const fs::path& out, const Common& common) {
  ObjectReader r(cfg);
  auto in = read_data_inputs(r, resolved, true);
  const auto plans = read_plans(r, resolved);
  const bool save = r.optional<bool>("save_checkpoints", false);
  r.finish();
  resolved["save_checkpoints"] = save;
  BenchmarkOptions opt;
  opt.feature_set = in.feature_set;
  opt.parallel = common.parallel;
  if (save) opt.run_dir = out / "runs";
  const auto report = run_benchmark(in.model, plans, in.samples, in.train, opt);
  write_report(report, out);
  if (report.completed == 0) throw Error("every fold failed");
}

void cmd_crossyear(json& cfg, json& resolved, const fs::path& out, const Common& common) {
  ObjectReader r(cfg);
  auto in = read_data_inputs(r, resolved, true);
  const int val_quota = r.optional<int>("val_quota", 10);
  const int train_cap = r.optional<int>("train_cap", 1000);
  r.finish();
  resolved["val_quota"] = val_quota;
  resolved["train_cap"] = train_cap;
  const auto plan = cross_year_protocol(DatasetIndex::from_samples(in.samples), val_quota, train_cap, in.train.seed);
  std::vector<FoldPlan> plans;
  for (const auto& [y, p] : plan.per_year) plans.push_back(p);
  write_fold_plans(out / "plans", plans);
  const auto m = cross_year_run(in.samples, plan, in.model, in.train, common.parallel);
  write_json(out / "matrix.json", to_json(m));
  std::ofstream csv(out / "matrix.csv");
  csv << "train_year";
  for (int y : m.years) csv << "," << y;
  csv << ",row_mean\n";
  csv.precision(17);
  for (std::size_t i = 0; i < m.years.size(); ++i) {
    csv << m.years[i];
    for (double v : m.ap[i]) csv << "," << v;
    csv << "," << m.row_mean[i] << "\n";
  }
  csv << "col_mean";
  for (double v : m.col_mean) csv << "," << v;
  csv << ",\n";
}

void cmd_analyze(json& cfg, json& resolved, const fs::path& out, const Common&) {
  ObjectReader r(cfg);
  const fs::path data = require_path(r.required<std::string>("data"), "data");
  const auto seed = r.optional<std::uint64_t>("seed", 0);
  const int horizon = r.optional<int>("horizon", 35);
  DomainReportOptions opt;
  opt.bins = r.optional<int>("bins", opt.bins);
  opt.fire_size_bins = r.optional<int>("fire_size_bins", opt.fire_size_bins);
  const int size_bins = r.optional<int>("size_bins", 30);
  std::optional<fs::path> report;
  if (r.has("report") && !cfg["report"].is_null()) report = require_path(r.required<std::string>("report"), "report");
  r.optional<std::string>("report", "");
  r.finish();
  resolved = {{"data", data.string()},     {"seed", seed},   {"horizon", horizon},
              {"bins", opt.bins},          {"fire_size_bins", opt.fire_size_bins},
              {"size_bins", size_bins},    {"report", report ? json(report->string()) : json(nullptr)}};
  if (horizon < 2) throw ConfigError("horizon must be >= 2", "horizon");
  const auto dataset = load_dataset(data);
  fs::create_directories(out);
  write_json(out / "domain_report.json", to_json(domain_report(dataset, seed, opt)));
  write_json(out / "growth_curves.json", to_json(growth_curves(dataset, horizon)));
  if (report) {
    const auto doc = read_json_file(*report, "report");
    std::vector<EventEvaluation> events;
    try {
      for (const auto& f : doc.at("folds")) {
        for (const auto& e : f.at("events")) {
          EventEvaluation ev;
          ev.event_id = e.at("event_id").get<std::string>();
          ev.year = e.at("year").get<int>();
          ev.fire_size = e.at("fire_size").get<std::size_t>();
          ev.ap = e.at("ap").is_null() ? std::nan("") : e.at("ap").get<double>();
          events.push_back(ev);
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError("report file lacks per-event results: " + std::string(e.what()), "report");
    }
    write_json(out / "ap_vs_size.json", to_json(ap_vs_size(events, size_bins)));
  }
}

void cmd_diff(json& cfg, json& resolved, const fs::path& out, const Common&) {
  ObjectReader r(cfg);
  const fs::path a = require_path(r.required<std::string>("a"), "a");
  const fs::path b = require_path(r.required<std::string>("b"), "b");
  r.optional<std::uint64_t>("seed", 0);
  r.finish();
  resolved = {{"a", a.string()}, {"b", b.string()}};
  const auto d = dataset_diff(a, b);
  fs::create_directories(out);
  write_json(out / "diff.json", to_json(d));
}

void cmd_export(json& cfg, json& resolved, const fs::path& out, const Common&) {
  ObjectReader r(cfg);
  const fs::path ckpt = require_path(r.required<std::string>("checkpoint"), "checkpoint");
  const fs::path data = require_path(r.required<std::string>("data"), "data");
  const auto feature_set = r.optional<std::string>("feature_set", "All");
  std::optional<fs::path> stats_path;
  if (r.has("stats") && !cfg["stats"].is_null()) stats_path = require_path(r.required<std::string>("stats"), "stats");
  r.optional<std::string>("stats", "");
  r.optional<std::uint64_t>("seed", 0);
  r.finish();
  resolved = {{"checkpoint", ckpt.string()},
              {"data", data.string()},
              {"feature_set", feature_set},
              {"stats", stats_path ? json(stats_path->string()) : json(nullptr)}};
  const auto model = load_checkpoint(ckpt);
  const auto dataset = load_dataset(data);
  FeatureSet fset;
  try {
    fset = FeatureSet::named(feature_set, dataset.schema);
  } catch (const Error& e) {
    throw ConfigError(e.what(), "feature_set");
  }
  auto samples = dataset_samples(dataset, model.config().window, fset);
  const auto stats = stats_path ? stats_from_json(read_json_file(*stats_path, "stats")) : compute_channel_stats(samples);
  samples = normalize(std::move(samples), stats);
  fs::create_directories(out);
  write_embeddings_csv(embedding_export(model, samples), out / "embeddings.csv");
  if (!stats_path) write_json(out / "stats.json", stats_json(stats, samples.empty() ? ChannelSchema{} : samples.front().schema));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wildfire spread benchmarking toolkit", "wildfire"};
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);

  struct Entry {
    std::string name;
    std::string help;
    Command run;
  };
  const std::vector<Entry> entries = {
      {"synth", "Generate a synthetic fire dataset", cmd_synth},
      {"folds", "Write cross-validation fold plans", cmd_folds},
      {"train", "Train one model on one fold", cmd_train},
      {"gridsearch", "Grid search over learning rate, loss and pretraining", cmd_gridsearch},
      {"benchmark", "Train and evaluate every fold of a plan", cmd_benchmark},
      {"crossyear", "Train on each year, test on every year", cmd_crossyear},
      {"analyze", "Domain-shift and fire-size diagnostics", cmd_analyze},
      {"diff", "Compare per-band statistics of two datasets", cmd_diff},
      {"export-embeddings", "Write pooled deepest-layer features as CSV", cmd_export},
  };

  Common common;
  // command-specific flags, copied into the config when given
  std::map<std::string, std::map<std::string, std::optional<std::string>>> flags;
  auto flag = [&](CLI::App* cmd, const std::string& name, const std::string& help) {
    cmd->add_option("--" + name, flags[cmd->get_name()][name], help);
  };
  std::vector<CLI::App*> commands;
  for (const auto& e : entries) {
    auto* cmd = app.add_subcommand(e.name, e.help);
    add_common(cmd, common);
    commands.push_back(cmd);
  }
  flag(commands[1], "protocol", "loyo | wsts_plus | random_event | cross_year");
  flag(commands[1], "years", "Comma-separated years");
  flag(commands[1], "data", "Dataset root");
  flag(commands[1], "k", "Number of random event folds");
  for (int i : {2, 3, 4, 5, 6, 8}) flag(commands[i], "data", "Dataset root");
  for (int i : {2, 3, 4}) flag(commands[i], "plan", "Fold plan file or directory");
  for (int i : {2, 3, 4, 5}) flag(commands[i], "model", "Model config JSON file");
  flag(commands[6], "report", "Benchmark report.json for fire-size analysis");
  flag(commands[7], "a", "First dataset root");
  flag(commands[7], "b", "Second dataset root");
  flag(commands[8], "checkpoint", "Checkpoint file");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  std::size_t which = 0;
  while (!commands[which]->parsed()) ++which;
  const auto& entry = entries[which];
  set_log_level(common.quiet ? LogLevel::quiet : LogLevel::info);

  fs::path out_dir;
  try {
    json cfg = base_config(common);
    for (const auto& [name, value] : flags[entry.name]) {
      if (!value) continue;
      if (name == "years") {
        std::vector<int> years;
        std::stringstream ss(*value);
        std::string part;
        while (std::getline(ss, part, ',')) {
          try {
            years.push_back(std::stoi(part));
          } catch (const std::exception&) {
            throw ConfigError("--years must be comma-separated integers", "years");
          }
        }
        cfg["years"] = years;
      } else if (name == "k") {
        try {
          cfg["k"] = std::stoi(*value);
        } catch (const std::exception&) {
          throw ConfigError("--k must be an integer", "k");
        }
      } else {
        cfg[name] = *value;
      }
    }
    out_dir = take_out(cfg);
    json resolved = json::object();
    entry.run(cfg, resolved, out_dir, common);
    write_run_files(out_dir, entry.name, resolved, args);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what();
    if (!e.field().empty() && std::string(e.what()).find(e.field()) == std::string::npos) {
      err << " (field '" << e.field() << "')";
    }
    err << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (!out_dir.empty()) {
      try {
        fs::create_directories(out_dir);
        write_json(out_dir / "status.json", {{"status", "failed"}, {"partial_outputs", true}, {"error", e.what()}});
      } catch (const std::exception&) {
      }
    }
    return kExitRuntime;
  }
}

}  // namespace wildfire
