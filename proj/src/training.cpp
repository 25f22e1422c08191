#include "wildfire/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"
#include "wildfire/json_util.hpp"
#include "wildfire/log.hpp"
#include "wildfire/nn/ops.hpp"
#include "wildfire/rng.hpp"
#include "wildfire/synthetic.hpp"

namespace wildfire {

using nlohmann::json;

std::string_view to_string(SelectionMetric metric) { return metric == SelectionMetric::ap ? "AP" : "F1"; }

SelectionMetric parse_selection_metric(std::string_view text) {
  if (text == "AP" || text == "ap") return SelectionMetric::ap;
  if (text == "F1" || text == "f1") return SelectionMetric::f1;
  throw ConfigError("unknown selection metric '" + std::string(text) + "'", "selection_metric");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1", "iterations");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1", "batch_size");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0", "learning_rate");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0", "weight_decay");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1", "eval_every");
  if (focal_alpha && !(*focal_alpha > 0.0 && *focal_alpha < 1.0)) {
    throw ConfigError("focal_alpha must lie in (0, 1)", "focal_alpha");
  }
  if (focal_gamma < 0.0) throw ConfigError("focal_gamma must be >= 0", "focal_gamma");
  if (pos_weight && !(*pos_weight > 0.0)) throw ConfigError("pos_weight must be > 0", "pos_weight");
  if (dice_eps < 0.0) throw ConfigError("dice_eps must be >= 0", "dice_eps");
  if (crop < 0 || crop % 8 != 0) throw ConfigError("crop must be 0 or a positive multiple of 8", "crop");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1", "eval_batch_size");
}

json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"loss", std::string(to_string(c.loss))},
          {"selection_metric", std::string(to_string(c.selection_metric))},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"focal_alpha", c.focal_alpha ? json(*c.focal_alpha) : json(nullptr)},
          {"focal_gamma", c.focal_gamma},
          {"pos_weight", c.pos_weight ? json(*c.pos_weight) : json(nullptr)},
          {"dice_eps", c.dice_eps},
          {"crop", c.crop},
          {"f1_threshold", c.f1_threshold},
          {"eval_batch_size", c.eval_batch_size}};
}

TrainConfig train_config_from_json(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  TrainConfig c;
  c.iterations = r.optional<int>("iterations", c.iterations);
  c.batch_size = r.optional<int>("batch_size", c.batch_size);
  c.learning_rate = r.optional<double>("learning_rate", c.learning_rate);
  c.weight_decay = r.optional<double>("weight_decay", c.weight_decay);
  try {
    c.loss = parse_loss_kind(r.optional<std::string>("loss", "focal"));
  } catch (const Error& e) {
    throw ConfigError(e.what(), r.field("loss"));
  }
  try {
    c.selection_metric = parse_selection_metric(r.optional<std::string>("selection_metric", "AP"));
  } catch (const Error& e) {
    throw ConfigError(e.what(), r.field("selection_metric"));
  }
  c.seed = r.optional<std::uint64_t>("seed", c.seed);
  c.eval_every = r.optional<int>("eval_every", c.eval_every);
  if (r.has("focal_alpha") && !doc.at("focal_alpha").is_null()) c.focal_alpha = r.required<double>("focal_alpha");
  r.optional<double>("focal_alpha", 0.0);
  c.focal_gamma = r.optional<double>("focal_gamma", c.focal_gamma);
  if (r.has("pos_weight") && !doc.at("pos_weight").is_null()) c.pos_weight = r.required<double>("pos_weight");
  r.optional<double>("pos_weight", 0.0);
  c.dice_eps = r.optional<double>("dice_eps", c.dice_eps);
  c.crop = r.optional<int>("crop", c.crop);
  c.f1_threshold = r.optional<double>("f1_threshold", c.f1_threshold);
  c.eval_batch_size = r.optional<int>("eval_batch_size", c.eval_batch_size);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), r.field(e.field()));
  }
  return c;
}

// ---------------------------------------------------------------------------

template <typename S>
AdamW<S>::AdamW(std::vector<nn::Var<S>> params, Options options) : params_(std::move(params)), opt_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename S>
void AdamW<S>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    S* w = p.value.data();
    const bool has_grad = p.grad.size() == p.value.size();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = has_grad ? static_cast<double>(p.grad.data()[j]) : 0.0;
      double x = static_cast<double>(w[j]);
      x -= opt_.lr * opt_.weight_decay * x;
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
      x -= opt_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt_.eps);
      w[j] = static_cast<S>(x);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

// ---------------------------------------------------------------------------

namespace {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double metric_of(const Evaluation& e, SelectionMetric m) { return m == SelectionMetric::ap ? e.ap : e.f1; }

double parameter_norm(const Model<float>& model) {
  double sum = 0.0;
  for (const auto& [name, p] : model.parameters()) {
    for (float v : p->value.values()) sum += static_cast<double>(v) * v;
  }
  return std::sqrt(sum);
}

WindowSample crop_sample(const WindowSample& s, int y0, int x0, int size) {
  WindowSample out = s;
  out.height = out.width = size;
  const std::size_t planes = static_cast<std::size_t>(s.window) * s.channels;
  out.inputs.assign(planes * size * size, 0.0f);
  out.target.assign(static_cast<std::size_t>(size) * size, 0);
  out.valid.assign(static_cast<std::size_t>(size) * size, 0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (int y = 0; y < size; ++y) {
      const float* src = s.inputs.data() + p * s.plane_size() + static_cast<std::size_t>(y0 + y) * s.width + x0;
      std::copy(src, src + size, out.inputs.data() + (p * size + y) * size);
    }
  }
  std::size_t pos = 0, valid = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t src = static_cast<std::size_t>(y0 + y) * s.width + x0 + x;
      const std::size_t dst = static_cast<std::size_t>(y) * size + x;
      out.target[dst] = s.target[src];
      out.valid[dst] = s.valid[src];
      if (s.valid[src]) {
        ++valid;
        pos += s.target[src];
      }
    }
  }
  out.prevalence = valid ? static_cast<double>(pos) / valid : 0.0;
  return out;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void check_splits(const std::vector<WindowSample>& train, const std::vector<WindowSample>& val) {
  if (train.empty()) throw ProtocolError("training split is empty");
  if (val.empty()) throw ProtocolError("validation split is empty");
}

}  // namespace

json to_json(const RunRecord& r, bool include_timing) {
  json evals = json::array();
  for (const auto& e : r.evaluations) {
    evals.push_back({{"step", e.step}, {"ap", e.ap}, {"f1", e.f1}, {"train_loss", e.loss}});
  }
  json doc = {{"config_hash", r.config_hash},
              {"model", to_json(r.model)},
              {"train", to_json(r.train)},
              {"parameter_count", r.parameter_count},
              {"train_prevalence", r.train_prevalence},
              {"focal_alpha", r.focal_alpha},
              {"pos_weight", r.pos_weight},
              {"eval_every", r.train.eval_every},
              {"evaluations", evals},
              {"aborted", r.aborted}};
  if (!r.evaluations.empty()) {
    doc["best_index"] = r.best_index;
    doc["best_step"] = r.evaluations[r.best_index].step;
    doc["best_metric"] = metric_of(r.evaluations[r.best_index], r.train.selection_metric);
  }
  if (include_timing && !r.best_checkpoint.empty()) doc["best_checkpoint"] = r.best_checkpoint;
  if (r.aborted) {
    doc["abort"] = {{"step", r.abort_step}, {"parameter_norm", r.abort_parameter_norm}, {"reason", r.abort_reason}};
  }
  if (r.test_ap) doc["test_ap"] = *r.test_ap;
  if (r.test_f1) doc["test_f1"] = *r.test_f1;
  if (include_timing) doc["seconds"] = r.seconds;
  return doc;
}

std::size_t select_checkpoint(const RunRecord& record, SelectionMetric metric) {
  if (record.evaluations.empty()) throw Error("run has no logged evaluations");
  std::size_t best = 0;
  for (std::size_t i = 1; i < record.evaluations.size(); ++i) {
    const double v = metric_of(record.evaluations[i], metric);
    const double b = metric_of(record.evaluations[best], metric);
    if (!std::isnan(v) && (std::isnan(b) || v > b)) best = i;
  }
  return best;
}

void TrainResult::use_checkpoint(SelectionMetric metric) {
  if (snapshots.empty()) return;
  restore(model, snapshots.at(select_checkpoint(record, metric)));
}

TrainResult train_run(const ModelConfig& model_config, const std::vector<WindowSample>& train,
                      const std::vector<WindowSample>& val, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  check_splits(train, val);
  const auto start = std::chrono::steady_clock::now();

  TrainResult result{RunRecord{}, {}, Model<float>(model_config, derive_seed(cfg.seed, 0x1417, 0))};
  auto& rec = result.record;
  auto& model = result.model;
  rec.model = model_config;
  rec.train = cfg;
  rec.config_hash = fnv1a_hex(json{{"model", to_json(model_config)}, {"train", to_json(cfg)}}.dump());
  rec.parameter_count = model.parameter_count();
  if (model_config.checkpoint_path) {
    const auto report = load_parameters(model, *model_config.checkpoint_path);
    log_info("loaded " + std::to_string(report.matched.size()) + " parameters from " + *model_config.checkpoint_path);
  }

  std::size_t pos = 0, valid = 0;
  for (const auto& s : train) {
    for (std::size_t i = 0; i < s.valid.size(); ++i) {
      if (s.valid[i]) {
        ++valid;
        pos += s.target[i];
      }
    }
  }
  rec.train_prevalence = valid ? static_cast<double>(pos) / valid : 0.0;
  LossOptions loss_opt;
  loss_opt.kind = cfg.loss;
  loss_opt.eps = cfg.dice_eps;
  loss_opt.focal.gamma = cfg.focal_gamma;
  loss_opt.focal.alpha = cfg.focal_alpha ? *cfg.focal_alpha : alpha_from_prevalence(rec.train_prevalence);
  if (cfg.pos_weight) {
    loss_opt.pos_weight = *cfg.pos_weight;
  } else {
    const double p = rec.train_prevalence;
    loss_opt.pos_weight = p > 0.0 ? std::clamp((1.0 - p) / p, 1.0, 100.0) : 1.0;
  }
  rec.focal_alpha = loss_opt.focal.alpha;
  rec.pos_weight = loss_opt.pos_weight;

  std::vector<nn::Var<float>> params;
  for (const auto& [name, p] : model.parameters()) params.push_back(p);
  AdamW<float> opt(params, {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});

  const int n = static_cast<int>(train.size());
  std::vector<int> order(n);
  std::size_t cursor = order.size();
  int epoch = 0;
  Rng crop_rng(derive_seed(cfg.seed, 0xc209, 0));
  double loss_sum = 0.0;
  int loss_count = 0;

  for (int step = 1; step <= cfg.iterations; ++step) {
    std::vector<WindowSample> cropped;
    std::vector<const WindowSample*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5eed, static_cast<std::uint64_t>(epoch++)));
        shuffle_rng.shuffle(std::span<int>(order));
        cursor = 0;
      }
      batch.push_back(&train[order[cursor++]]);
    }
    if (cfg.crop > 0) {
      cropped.reserve(batch.size());
      for (auto*& s : batch) {
        if (cfg.crop >= s->height && cfg.crop >= s->width) continue;
        const int size = std::min({cfg.crop, s->height, s->width});
        const int y0 = static_cast<int>(crop_rng.below(static_cast<std::uint64_t>(s->height - size + 1)));
        const int x0 = static_cast<int>(crop_rng.below(static_cast<std::uint64_t>(s->width - size + 1)));
        cropped.push_back(crop_sample(*s, y0, x0, size));
        s = &cropped.back();
      }
    }

    const auto input = make_input<float>(std::span<const WindowSample* const>(batch));
    auto logits = model.forward(input);
    const std::size_t plane = static_cast<std::size_t>(batch[0]->height) * batch[0]->width;
    std::vector<double> z(logits->value.size());
    std::vector<std::uint8_t> target(z.size()), mask(z.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::copy(batch[b]->target.begin(), batch[b]->target.end(), target.begin() + b * plane);
      std::copy(batch[b]->valid.begin(), batch[b]->valid.end(), mask.begin() + b * plane);
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = logits->value.data()[i];
    const auto loss = loss_from_logits(z, target, mask, loss_opt);
    if (!std::isfinite(loss.value)) {
      rec.aborted = true;
      rec.abort_step = step;
      rec.abort_parameter_norm = parameter_norm(model);
      rec.abort_reason = "non-finite loss at step " + std::to_string(step);
      log_warning(rec.abort_reason + " (parameter norm " + std::to_string(rec.abort_parameter_norm) + ")");
      break;
    }
    nn::Tensor<float> grad(logits->value.shape());
    for (std::size_t i = 0; i < z.size(); ++i) grad.data()[i] = static_cast<float>(loss.gradient[i]);
    model.zero_grad();
    nn::backward(nn::external_scalar(logits, static_cast<float>(loss.value), std::move(grad)));
    opt.step();
    loss_sum += loss.value;
    ++loss_count;

    if (step % cfg.eval_every == 0 || step == cfg.iterations) {
      const auto pred = predict_scores(model, val, cfg.eval_batch_size);
      Evaluation e;
      e.step = step;
      e.ap = average_precision(pred.scores, pred.labels);
      e.f1 = f1_at_threshold(pred.scores, pred.labels, cfg.f1_threshold);
      e.loss = loss_sum / loss_count;
      loss_sum = 0.0;
      loss_count = 0;
      rec.evaluations.push_back(e);
      result.snapshots.push_back(snapshot(model));
      log_info("step " + std::to_string(step) + ": val AP " + std::to_string(e.ap) + ", F1 " + std::to_string(e.f1));
    }
  }

  if (!rec.evaluations.empty()) {
    rec.best_index = select_checkpoint(rec, cfg.selection_metric);
    result.use_checkpoint(cfg.selection_metric);
    if (options.checkpoint_dir) {
      const auto path = *options.checkpoint_dir / "best.wfck";
      save_checkpoint(model, path);
      rec.best_checkpoint = path.string();
    }
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Predictions predict_scores(const Model<float>& model, const std::vector<WindowSample>& samples, int batch_size) {
  Predictions out;
  nn::NoGradGuard guard;
  for (std::size_t first = 0; first < samples.size(); first += batch_size) {
    const std::size_t last = std::min(samples.size(), first + static_cast<std::size_t>(batch_size));
    std::vector<const WindowSample*> batch;
    for (std::size_t i = first; i < last; ++i) batch.push_back(&samples[i]);
    const auto logits = model.forward(make_input<float>(std::span<const WindowSample* const>(batch)));
    const std::size_t plane = samples[first].plane_size();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = *batch[b];
      for (std::size_t i = 0; i < plane; ++i) {
        if (!s.valid[i]) continue;
        out.scores.push_back(sigmoid(logits->value.data()[b * plane + i]));
        out.labels.push_back(s.target[i]);
        out.sample.push_back(static_cast<std::uint32_t>(first + b));
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> predict(const Model<float>& model, const WindowSample& sample, double threshold) {
  nn::NoGradGuard guard;
  const WindowSample* one[] = {&sample};
  const auto logits = model.forward(make_input<float>(std::span<const WindowSample* const>(one)));
  std::vector<std::uint8_t> out(sample.plane_size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(logits->value.data()[i]) >= threshold ? 1 : 0;
  return out;
}

Predictions persistence_scores(const std::vector<WindowSample>& samples) {
  Predictions out;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    const auto scores = persistence_scores(s);
    for (std::size_t i = 0; i < s.plane_size(); ++i) {
      if (!s.valid[i]) continue;
      out.scores.push_back(scores[i]);
      out.labels.push_back(s.target[i]);
      out.sample.push_back(static_cast<std::uint32_t>(k));
    }
  }
  return out;
}

MacroAp macro_average_precision(const Predictions& pred, std::size_t sample_count) {
  std::vector<std::vector<double>> scores(sample_count);
  std::vector<std::vector<std::uint8_t>> labels(sample_count);
  for (std::size_t i = 0; i < pred.scores.size(); ++i) {
    scores.at(pred.sample[i]).push_back(pred.scores[i]);
    labels[pred.sample[i]].push_back(pred.labels[i]);
  }
  MacroAp m;
  double sum = 0.0;
  for (std::size_t k = 0; k < sample_count; ++k) {
    const double ap = average_precision(scores[k], labels[k]);
    if (std::isnan(ap)) {
      ++m.skipped;
      continue;
    }
    sum += ap;
    ++m.used;
  }
  m.mean = m.used ? sum / m.used : std::nan("");
  return m;
}

std::vector<EventEvaluation> per_event_ap(const Predictions& pred, const std::vector<WindowSample>& samples) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<std::uint8_t>>> groups;
  std::map<std::string, EventEvaluation> meta;
  for (const auto& s : samples) {
    auto& m = meta[s.event_id];
    m.event_id = s.event_id;
    m.year = s.year;
    m.fire_size += s.positive_pixels();
  }
  for (std::size_t i = 0; i < pred.scores.size(); ++i) {
    auto& g = groups[samples[pred.sample[i]].event_id];
    g.first.push_back(pred.scores[i]);
    g.second.push_back(pred.labels[i]);
  }
  std::vector<EventEvaluation> out;
  for (auto& [id, m] : meta) {
    const auto it = groups.find(id);
    m.ap = it == groups.end() ? std::nan("") : average_precision(it->second.first, it->second.second);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------

FoldSplit make_split(const FoldPlan& plan, const std::vector<WindowSample>& samples) {
  FoldSplit split;
  auto assign = [&](const WindowSample& s) -> std::vector<WindowSample>* {
    switch (plan.protocol) {
      case Protocol::loyo:
      case Protocol::wsts_plus: {
        auto in = [&](const std::vector<int>& ys) { return std::find(ys.begin(), ys.end(), s.year) != ys.end(); };
        if (in(plan.test_years)) return &split.test;
        if (in(plan.val_years)) return &split.val;
        if (in(plan.train_years)) return &split.train;
        return nullptr;
      }
      case Protocol::random_event: {
        auto in = [&](const std::vector<std::string>& es) {
          return std::find(es.begin(), es.end(), s.event_id) != es.end();
        };
        if (in(plan.test_events)) return &split.test;
        if (in(plan.val_events)) return &split.val;
        if (in(plan.train_events)) return &split.train;
        return nullptr;
      }
      case Protocol::cross_year: break;
    }
    const SampleKey key{s.event_id, s.target_date.iso()};
    auto in = [&](const std::vector<SampleKey>& ks) { return std::find(ks.begin(), ks.end(), key) != ks.end(); };
    if (in(plan.test_samples)) return &split.test;
    if (in(plan.val_samples)) return &split.val;
    if (in(plan.train_samples)) return &split.train;
    return nullptr;
  };
  for (const auto& s : samples) {
    if (auto* dst = assign(s)) dst->push_back(s);
  }
  if (split.train.empty()) throw ProtocolError("fold " + std::to_string(plan.fold_id) + " has no training samples");
  if (split.val.empty()) throw ProtocolError("fold " + std::to_string(plan.fold_id) + " has no validation samples");
  if (split.test.empty()) throw ProtocolError("fold " + std::to_string(plan.fold_id) + " has no test samples");
  split.stats = compute_channel_stats(split.train);
  split.train = normalize(std::move(split.train), split.stats, &split.warnings);
  split.val = normalize(std::move(split.val), split.stats);
  split.test = normalize(std::move(split.test), split.stats);
  return split;
}

void parallel_for(int count, int parallel, const std::function<void(int)>& job) {
  const int workers = std::max(1, std::min(parallel, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

double test_ap_of(const Model<float>& model, const std::vector<WindowSample>& test, int batch) {
  const auto pred = predict_scores(model, test, batch);
  return average_precision(pred.scores, pred.labels);
}

FoldResult run_fold(const ModelConfig& model_config, const FoldPlan& plan, const std::vector<WindowSample>& samples,
                    const TrainConfig& cfg, const BenchmarkOptions& options) {
  FoldResult fold;
  fold.fold_id = plan.fold_id;
  fold.test_years = plan.test_years;
  const auto start = std::chrono::steady_clock::now();
  try {
    auto split = make_split(plan, samples);
    for (const auto& w : split.warnings) log_warning("fold " + std::to_string(plan.fold_id) + ": " + w);
    if (fold.test_years.empty()) {
      std::set<int> ys;
      for (const auto& s : split.test) ys.insert(s.year);
      fold.test_years.assign(ys.begin(), ys.end());
    }
    TrainOptions topt;
    if (options.run_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "fold_%02d", plan.fold_id);
      topt.checkpoint_dir = *options.run_dir / name;
    }
    auto run = train_run(model_config, split.train, split.val, cfg, topt);
    fold.record = run.record;
    fold.parameter_count = run.record.parameter_count;
    if (run.record.aborted) throw Error(run.record.abort_reason);

    run.use_checkpoint(SelectionMetric::ap);
    fold.ap_of_ap_selected = test_ap_of(run.model, split.test, cfg.eval_batch_size);
    run.use_checkpoint(SelectionMetric::f1);
    fold.ap_of_f1_selected = test_ap_of(run.model, split.test, cfg.eval_batch_size);
    run.use_checkpoint(cfg.selection_metric);

    const auto pred = predict_scores(run.model, split.test, cfg.eval_batch_size);
    fold.ap = average_precision(pred.scores, pred.labels);
    fold.macro = macro_average_precision(pred, split.test.size());
    fold.f1 = f1_at_threshold(pred.scores, pred.labels, cfg.f1_threshold);
    const auto base = persistence_scores(split.test);
    fold.baseline_ap = average_precision(base.scores, base.labels);
    fold.events = per_event_ap(pred, split.test);
    std::map<int, std::pair<std::vector<double>, std::vector<std::uint8_t>>> by_year;
    for (std::size_t i = 0; i < pred.scores.size(); ++i) {
      auto& g = by_year[split.test[pred.sample[i]].year];
      g.first.push_back(pred.scores[i]);
      g.second.push_back(pred.labels[i]);
    }
    for (const auto& [year, g] : by_year) fold.per_year_ap[year] = average_precision(g.first, g.second);
    fold.record.test_ap = fold.ap;
    fold.record.test_f1 = fold.f1;
    fold.completed = true;
  } catch (const std::exception& e) {
    fold.completed = false;
    fold.error = e.what();
    log_warning("fold " + std::to_string(plan.fold_id) + " failed: " + fold.error);
  }
  fold.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fold;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

EvalReport run_benchmark(const ModelConfig& model_config, const std::vector<FoldPlan>& plans,
                         const std::vector<WindowSample>& samples, const TrainConfig& cfg,
                         const BenchmarkOptions& options) {
  if (plans.empty()) throw ProtocolError("no fold plans given");
  for (const auto& p : plans) p.validate();
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.model = model_config;
  report.train = cfg;
  report.feature_set = options.feature_set;
  report.parameter_count = Model<float>(model_config, 0).parameter_count();
  report.folds.resize(plans.size());
  parallel_for(static_cast<int>(plans.size()), options.parallel,
               [&](int i) { report.folds[i] = run_fold(model_config, plans[i], samples, cfg, options); });
  std::sort(report.folds.begin(), report.folds.end(),
            [](const FoldResult& a, const FoldResult& b) { return a.fold_id < b.fold_id; });

  std::vector<double> aps, baselines, macros;
  for (const auto& f : report.folds) {
    if (!f.completed) continue;
    aps.push_back(f.ap);
    macros.push_back(f.macro.mean);
    baselines.push_back(f.baseline_ap);
    for (const auto& [year, ap] : f.per_year_ap) report.per_year_ap[year].push_back(ap);
  }
  report.completed = static_cast<int>(aps.size());
  report.partial = report.completed < static_cast<int>(plans.size());
  report.single_fold = report.completed == 1;
  if (!aps.empty()) {
    double sum = 0.0;
    for (double a : aps) sum += a;
    report.mean_ap = sum / aps.size();
    double sq = 0.0;
    for (double a : aps) sq += (a - report.mean_ap) * (a - report.mean_ap);
    report.std_ap = aps.size() > 1 ? std::sqrt(sq / (aps.size() - 1)) : 0.0;
    double bsum = 0.0;
    for (double b : baselines) bsum += b;
    report.mean_baseline_ap = bsum / baselines.size();
    double msum = 0.0;
    int mcount = 0;
    for (double m : macros) {
      if (std::isnan(m)) continue;
      msum += m;
      ++mcount;
    }
    report.mean_macro_ap = mcount ? msum / mcount : std::nan("");
  } else {
    report.mean_ap = report.std_ap = report.mean_baseline_ap = report.mean_macro_ap = std::nan("");
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

json to_json(const EvalReport& r, bool include_timing) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json events = json::array();
    for (const auto& e : f.events) {
      events.push_back({{"event_id", e.event_id}, {"year", e.year}, {"fire_size", e.fire_size}, {"ap", number_or_null(e.ap)}});
    }
    json per_year = json::object();
    for (const auto& [y, ap] : f.per_year_ap) per_year[std::to_string(y)] = number_or_null(ap);
    json fj = {{"fold_id", f.fold_id},
               {"test_years", f.test_years},
               {"completed", f.completed},
               {"ap", number_or_null(f.ap)},
               {"macro_ap", number_or_null(f.macro.mean)},
               {"macro_samples_used", f.macro.used},
               {"macro_samples_skipped", f.macro.skipped},
               {"f1", number_or_null(f.f1)},
               {"baseline_ap", number_or_null(f.baseline_ap)},
               {"ap_of_ap_selected", number_or_null(f.ap_of_ap_selected)},
               {"ap_of_f1_selected", number_or_null(f.ap_of_f1_selected)},
               {"parameter_count", f.parameter_count},
               {"per_year_ap", per_year},
               {"events", events},
               {"run", to_json(f.record, include_timing)}};
    if (!f.completed) fj["error"] = f.error;
    if (include_timing) fj["seconds"] = f.seconds;
    folds.push_back(fj);
  }
  json per_year = json::object();
  for (const auto& [y, aps] : r.per_year_ap) per_year[std::to_string(y)] = aps;
  json doc = {{"model", to_json(r.model)},
              {"train", to_json(r.train)},
              {"feature_set", r.feature_set},
              {"parameter_count", r.parameter_count},
              {"folds", folds},
              {"completed_folds", r.completed},
              {"partial", r.partial},
              {"single_fold", r.single_fold},
              {"mean_ap", number_or_null(r.mean_ap)},
              {"std_ap", number_or_null(r.std_ap)},
              {"mean_macro_ap", number_or_null(r.mean_macro_ap)},
              {"mean_baseline_ap", number_or_null(r.mean_baseline_ap)},
              {"per_year_ap", per_year}};
  if (include_timing) doc["seconds"] = r.seconds;
  return doc;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    out << to_json(report, true).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "metrics.json");
    out << to_json(report, false).dump(2) << "\n";
  }
  std::ofstream csv(dir / "folds.csv");
  csv << "fold_id,test_years,ap,f1,baseline_ap,params,seconds\n";
  for (const auto& f : report.folds) {
    std::string years;
    for (std::size_t i = 0; i < f.test_years.size(); ++i) years += (i ? ";" : "") + std::to_string(f.test_years[i]);
    char line[256];
    if (f.completed) {
      std::snprintf(line, sizeof line, "%d,%s,%.17g,%.17g,%.17g,%zu,%.3f\n", f.fold_id, years.c_str(), f.ap, f.f1,
                    f.baseline_ap, f.parameter_count, f.seconds);
    } else {
      std::snprintf(line, sizeof line, "%d,%s,,,,%zu,%.3f\n", f.fold_id, years.c_str(), f.parameter_count, f.seconds);
    }
    csv << line;
  }
  if (!csv) throw Error("cannot write report to " + dir.string());
}

// ---------------------------------------------------------------------------

json to_json(const GridSpec& g) {
  json losses = json::array();
  for (auto l : g.losses) losses.push_back(std::string(to_string(l)));
  return {{"learning_rates", g.learning_rates},
          {"losses", losses},
          {"pretraining", g.pretraining},
          {"pretrained_checkpoint", g.pretrained_checkpoint ? json(*g.pretrained_checkpoint) : json(nullptr)}};
}

GridSpec grid_spec_from_json(const json& doc, const std::string& path) {
  ObjectReader r(doc, path);
  GridSpec g;
  g.learning_rates = r.optional<std::vector<double>>("learning_rates", g.learning_rates);
  std::vector<std::string> losses;
  for (auto l : g.losses) losses.emplace_back(to_string(l));
  losses = r.optional<std::vector<std::string>>("losses", losses);
  g.losses.clear();
  for (const auto& l : losses) {
    try {
      g.losses.push_back(parse_loss_kind(l));
    } catch (const Error& e) {
      throw ConfigError(e.what(), r.field("losses"));
    }
  }
  g.pretraining = r.optional<std::vector<bool>>("pretraining", g.pretraining);
  if (r.has("pretrained_checkpoint") && !doc.at("pretrained_checkpoint").is_null()) {
    g.pretrained_checkpoint = r.required<std::string>("pretrained_checkpoint");
  }
  r.optional<std::string>("pretrained_checkpoint", "");
  r.finish();
  if (g.size() == 0) throw ConfigError("grid is empty", r.field("learning_rates"));
  for (double lr : g.learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be > 0", r.field("learning_rates"));
  }
  return g;
}

std::vector<GridEntry> grid_search(const ModelConfig& model_config, const GridSpec& grid, const FoldPlan& fold,
                                   const std::vector<WindowSample>& samples, const TrainConfig& cfg, int parallel) {
  if (grid.size() == 0) throw ConfigError("grid is empty", "grid");
  const auto split = make_split(fold, samples);
  std::vector<GridEntry> entries;
  for (double lr : grid.learning_rates) {
    for (auto loss : grid.losses) {
      for (bool pre : grid.pretraining) {
        GridEntry e;
        e.learning_rate = lr;
        e.loss = loss;
        e.pretraining = pre;
        entries.push_back(e);
      }
    }
  }
  parallel_for(static_cast<int>(entries.size()), parallel, [&](int i) {
    auto& e = entries[i];
    try {
      TrainConfig c = cfg;
      c.learning_rate = e.learning_rate;
      c.loss = e.loss;
      ModelConfig m = model_config;
      if (e.pretraining) {
        if (!grid.pretrained_checkpoint) throw ConfigError("pretraining requested without pretrained_checkpoint", "grid.pretrained_checkpoint");
        m.checkpoint_path = grid.pretrained_checkpoint;
      } else {
        m.checkpoint_path.reset();
      }
      const auto run = train_run(m, split.train, split.val, c);
      e.record = run.record;
      if (run.record.aborted) throw Error(run.record.abort_reason);
      e.best_val_ap = run.record.evaluations[select_checkpoint(run.record, SelectionMetric::ap)].ap;
      e.completed = true;
    } catch (const std::exception& ex) {
      e.completed = false;
      e.error = ex.what();
      log_warning("grid point " + std::to_string(i) + " failed: " + e.error);
    }
  });
  std::stable_sort(entries.begin(), entries.end(), [](const GridEntry& a, const GridEntry& b) {
    if (a.completed != b.completed) return a.completed;
    if (!a.completed) return false;
    const double x = std::isnan(a.best_val_ap) ? -1.0 : a.best_val_ap;
    const double y = std::isnan(b.best_val_ap) ? -1.0 : b.best_val_ap;
    return x > y;
  });
  return entries;
}

json to_json(const std::vector<GridEntry>& ranking, bool include_timing) {
  json out = json::array();
  int rank = 1;
  for (const auto& e : ranking) {
    json j = {{"rank", rank++},
              {"learning_rate", e.learning_rate},
              {"loss", std::string(to_string(e.loss))},
              {"pretraining", e.pretraining},
              {"completed", e.completed},
              {"best_val_ap", e.completed ? number_or_null(e.best_val_ap) : json(nullptr)}};
    if (!e.completed) j["error"] = e.error;
    if (e.completed) j["run"] = to_json(e.record, include_timing);
    out.push_back(j);
  }
  return out;
}

}  // namespace wildfire
