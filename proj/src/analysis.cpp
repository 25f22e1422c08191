#include "wildfire/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "wildfire/errors.hpp"
#include "wildfire/log.hpp"
#include "wildfire/rng.hpp"

namespace wildfire {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Histogram histogram_on(const std::vector<double>& edges, const std::vector<double>& values) {
  Histogram h;
  h.edges = edges;
  h.mass.assign(edges.size() - 1, 0.0);
  const double lo = edges.front(), hi = edges.back();
  const std::size_t bins = h.mass.size();
  for (double v : values) {
    std::size_t b;
    if (hi > lo) {
      const double pos = (v - lo) / (hi - lo) * static_cast<double>(bins);
      b = pos <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(pos));
    } else {
      b = 0;
    }
    h.mass[b] += 1.0;
  }
  h.count = values.size();
  if (h.count) {
    for (auto& m : h.mass) m /= static_cast<double>(h.count);
  }
  return h;
}

std::vector<double> linear_edges(double lo, double hi, int bins) {
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<double> e(bins + 1);
  for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
  e.back() = hi;
  return e;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

json histogram_json(const Histogram& h) { return {{"edges", h.edges}, {"mass", h.mass}, {"count", h.count}}; }

// Targets of consecutive-day pairs: the fire mask of every day whose previous
// calendar day is also present.
std::vector<std::size_t> target_fire_sizes(const FireEventCube& cube) {
  std::vector<std::size_t> sizes;
  for (int d = 1; d < cube.days(); ++d) {
    if (cube.dates[d - 1].days_until(cube.dates[d]) != 1) continue;
    sizes.push_back(cube.fire_pixels(d));
  }
  return sizes;
}

}  // namespace

double total_variation(const Histogram& a, const Histogram& b) {
  if (a.mass.size() != b.mass.size()) throw ShapeError("histograms use different bins");
  double s = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) s += std::abs(a.mass[i] - b.mass[i]);
  return 0.5 * s;
}

DomainReport domain_report(const Dataset& dataset, std::uint64_t seed, const DomainReportOptions& options) {
  if (options.bins < 1 || options.fire_size_bins < 1) throw ConfigError("bin counts must be >= 1", "bins");
  DomainReport report;
  report.years = dataset.years();
  if (report.years.empty()) throw ProtocolError("dataset has no events");
  report.cross_year = report.years.size() >= 2;
  if (!report.cross_year) log_warning("domain report on a single year: cross-year comparisons omitted");

  std::map<int, std::vector<const FireEventCube*>> by_year;
  for (const auto& e : dataset.events) by_year[e.year].push_back(&e);
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& [y, es] : by_year) smallest = std::min(smallest, es.size());
  report.balanced_events = smallest;
  for (auto& [y, es] : by_year) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(y), 0xba1a));
    rng.shuffle(std::span<const FireEventCube*>(es));
    es.resize(smallest);
    std::sort(es.begin(), es.end(), [](auto* a, auto* b) { return a->event_id < b->event_id; });
  }

  const auto& schema = dataset.schema;
  int landcover = -1;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].group == ChannelGroup::fire) continue;
    if (schema[c].categorical) {
      if (schema[c].group == ChannelGroup::landcover && landcover < 0) landcover = static_cast<int>(c);
      continue;
    }
    report.channels.push_back(schema[c].name);
  }

  // continuous channels: values per year, then shared edges
  for (const auto& name : report.channels) {
    const int c = channel_index(schema, name);
    std::map<int, std::vector<double>> values;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [y, es] : by_year) {
      auto& v = values[y];
      for (const auto* e : es) {
        for (int d = 0; d < e->days(); ++d) {
          const auto p = e->plane(d, c);
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (e->is_nodata(d, i) || !std::isfinite(p[i])) continue;
            v.push_back(p[i]);
            lo = std::min(lo, static_cast<double>(p[i]));
            hi = std::max(hi, static_cast<double>(p[i]));
          }
        }
      }
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    const auto edges = linear_edges(lo, hi, options.bins);
    for (auto& [y, v] : values) {
      ChannelSummary s;
      s.histogram = histogram_on(edges, v);
      if (!v.empty()) {
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / v.size();
        double sq = 0.0;
        for (double x : v) sq += (x - s.mean) * (x - s.mean);
        s.stddev = v.size() > 1 ? std::sqrt(sq / (v.size() - 1)) : 0.0;
      } else {
        s.mean = s.stddev = std::nan("");
      }
      std::sort(v.begin(), v.end());
      for (double q : report.quantile_levels) s.quantiles.push_back(quantile_sorted(v, q));
      report.per_year[y][name] = std::move(s);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < report.years.size(); ++i) {
      for (std::size_t j = i + 1; j < report.years.size(); ++j) {
        worst = std::max(worst, total_variation(report.per_year[report.years[i]][name].histogram,
                                                report.per_year[report.years[j]][name].histogram));
      }
    }
    if (report.cross_year) report.max_tv_distance[name] = worst;
  }

  // zero-fire probability and fire sizes over next-day targets
  std::map<int, std::vector<double>> sizes;
  double max_size = 1.0;
  for (const auto& [y, es] : by_year) {
    std::size_t zero = 0, total = 0;
    auto& s = sizes[y];
    for (const auto* e : es) {
      for (auto n : target_fire_sizes(*e)) {
        ++total;
        if (n == 0) {
          ++zero;
        } else {
          s.push_back(std::log10(static_cast<double>(n)));
          max_size = std::max(max_size, static_cast<double>(n));
        }
      }
    }
    report.zero_fire_probability[y] = total ? static_cast<double>(zero) / total : std::nan("");
  }
  report.fire_size_edges = linear_edges(0.0, std::log10(max_size) + 1e-9, options.fire_size_bins);
  for (auto& edge : report.fire_size_edges) edge = std::pow(10.0, edge);
  const auto log_edges = linear_edges(0.0, std::log10(max_size) + 1e-9, options.fire_size_bins);
  for (const auto& [y, s] : sizes) {
    auto h = histogram_on(log_edges, s);
    h.edges = report.fire_size_edges;
    report.fire_sizes[y] = std::move(h);
  }

  if (landcover >= 0) {
    for (const auto& [y, es] : by_year) {
      std::map<int, double> counts;
      double total = 0.0;
      for (const auto* e : es) {
        for (int d = 0; d < e->days(); ++d) {
          const auto p = e->plane(d, landcover);
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (e->is_nodata(d, i) || !std::isfinite(p[i])) continue;
            counts[static_cast<int>(std::lround(p[i]))] += 1.0;
            total += 1.0;
          }
        }
      }
      auto& out = report.landcover[y];
      for (const auto& [cls, n] : counts) out[cls] = n / total;
    }
  }
  return report;
}

json to_json(const DomainReport& r) {
  json per_year = json::object();
  for (const auto& [y, chans] : r.per_year) {
    json cj = json::object();
    for (const auto& [name, s] : chans) {
      json q = json::array();
      for (double v : s.quantiles) q.push_back(num(v));
      cj[name] = {{"mean", num(s.mean)}, {"std", num(s.stddev)}, {"quantiles", q}, {"histogram", histogram_json(s.histogram)}};
    }
    per_year[std::to_string(y)] = cj;
  }
  json zero = json::object(), land = json::object(), sizes = json::object(), tv = json::object();
  for (const auto& [y, p] : r.zero_fire_probability) zero[std::to_string(y)] = num(p);
  for (const auto& [y, m] : r.landcover) {
    json lj = json::object();
    for (const auto& [cls, p] : m) lj[std::to_string(cls)] = p;
    land[std::to_string(y)] = lj;
  }
  for (const auto& [y, h] : r.fire_sizes) sizes[std::to_string(y)] = {{"mass", h.mass}, {"count", h.count}};
  for (const auto& [name, d] : r.max_tv_distance) tv[name] = d;
  return {{"years", r.years},
          {"quantile_levels", r.quantile_levels},
          {"channels", r.channels},
          {"per_year", per_year},
          {"zero_fire_probability", zero},
          {"landcover_proportions", land},
          {"fire_size_edges", r.fire_size_edges},
          {"fire_sizes", sizes},
          {"balanced_events_per_year", r.balanced_events},
          {"cross_year", r.cross_year},
          {"max_tv_distance", tv}};
}

// ---------------------------------------------------------------------------

std::vector<GrowthCurve> growth_curves(const Dataset& dataset, int horizon) {
  if (horizon < 2) throw ConfigError("horizon must be >= 2", "horizon");
  std::map<int, std::vector<std::vector<double>>> trajectories;
  for (int y : dataset.years()) trajectories[y];
  for (const auto& e : dataset.events) {
    int first = -1;
    for (int d = 0; d < e.days() && first < 0; ++d) {
      if (e.fire_pixels(d) > 0) first = d;
    }
    if (first < 0) continue;
    std::vector<double> t;
    for (int k = 0; k < horizon; ++k) {
      // day index counts calendar days since the first burning day
      const Date day = e.dates[first].plus_days(k);
      const auto it = std::find(e.dates.begin() + first, e.dates.end(), day);
      if (it == e.dates.end()) break;
      t.push_back(static_cast<double>(e.fire_pixels(static_cast<int>(it - e.dates.begin()))));
    }
    trajectories[e.year].push_back(std::move(t));
  }
  std::vector<GrowthCurve> out;
  for (const auto& [y, ts] : trajectories) {
    GrowthCurve g;
    g.year = y;
    g.no_fires = ts.empty();
    g.single_event = ts.size() == 1;
    for (int k = 0; k < horizon; ++k) {
      double sum = 0.0;
      int n = 0;
      for (const auto& t : ts) {
        if (k < static_cast<int>(t.size())) {
          sum += t[k];
          ++n;
        }
      }
      const double mean = n ? sum / n : 0.0;
      double sq = 0.0;
      for (const auto& t : ts) {
        if (k < static_cast<int>(t.size())) sq += (t[k] - mean) * (t[k] - mean);
      }
      const double half = n > 1 ? 1.96 * std::sqrt(sq / (n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
      g.mean.push_back(mean);
      g.ci_low.push_back(mean - half);
      g.ci_high.push_back(mean + half);
      g.n.push_back(n);
    }
    out.push_back(std::move(g));
  }
  return out;
}

json to_json(const std::vector<GrowthCurve>& curves) {
  json out = json::array();
  for (const auto& g : curves) {
    out.push_back({{"year", g.year},
                   {"mean", g.mean},
                   {"ci_low", g.ci_low},
                   {"ci_high", g.ci_high},
                   {"n", g.n},
                   {"no_fires", g.no_fires},
                   {"single_event", g.single_event}});
  }
  return out;
}

// ---------------------------------------------------------------------------

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson inputs differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nan("");
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nan("");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

ApVsSize ap_vs_size(const std::vector<EventEvaluation>& events, int bins) {
  if (bins < 1) throw ConfigError("bins must be >= 1", "bins");
  ApVsSize out;
  for (const auto& e : events) {
    if (e.fire_size > 0 && std::isfinite(e.ap)) out.events.push_back(e);
  }
  if (out.events.size() < 3) throw ProtocolError("ap_vs_size needs at least 3 events with positive fire size");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_year;
  std::vector<double> xs, ys;
  for (const auto& e : out.events) {
    const double lx = std::log10(static_cast<double>(e.fire_size));
    xs.push_back(lx);
    ys.push_back(e.ap);
    by_year[e.year].first.push_back(lx);
    by_year[e.year].second.push_back(e.ap);
  }
  out.r_all = pearson(xs, ys);
  for (const auto& [y, v] : by_year) out.r_per_year[y] = pearson(v.first, v.second);
  const double lo = *std::min_element(xs.begin(), xs.end());
  double hi = *std::max_element(xs.begin(), xs.end());
  if (!(hi > lo)) hi = lo + 1.0;
  for (int b = 0; b < bins; ++b) {
    SizeBin bin;
    bin.low = std::pow(10.0, lo + (hi - lo) * b / bins);
    bin.high = std::pow(10.0, lo + (hi - lo) * (b + 1) / bins);
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      int k = static_cast<int>((xs[i] - lo) / (hi - lo) * bins);
      k = std::clamp(k, 0, bins - 1);
      if (k == b) {
        sum += ys[i];
        ++bin.count;
      }
    }
    bin.mean_ap = bin.count ? sum / bin.count : std::nan("");
    out.bins.push_back(bin);
  }
  return out;
}

json to_json(const ApVsSize& r) {
  json events = json::array(), bins = json::array(), per_year = json::object();
  for (const auto& e : r.events) {
    events.push_back({{"event_id", e.event_id}, {"year", e.year}, {"fire_size", e.fire_size}, {"ap", e.ap}});
  }
  for (const auto& b : r.bins) bins.push_back({{"low", b.low}, {"high", b.high}, {"count", b.count}, {"mean_ap", num(b.mean_ap)}});
  for (const auto& [y, v] : r.r_per_year) per_year[std::to_string(y)] = num(v);
  return {{"events", events},
          {"r_all", num(r.r_all)},
          {"r_all_undefined", !std::isfinite(r.r_all)},
          {"r_per_year", per_year},
          {"bins", bins}};
}

// ---------------------------------------------------------------------------

double nan_mean(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / n : std::nan("");
}

CrossYearMatrix cross_year_run(const std::vector<WindowSample>& samples, const CrossYearPlan& plan,
                               const ModelConfig& model_config, const TrainConfig& cfg, int parallel) {
  if (plan.per_year.size() < 2) throw ProtocolError("cross-year run needs at least 2 years");
  CrossYearMatrix m;
  for (const auto& [y, p] : plan.per_year) m.years.push_back(y);
  const std::size_t n = m.years.size();
  m.ap.assign(n, std::vector<double>(n, std::nan("")));

  std::map<SampleKey, const WindowSample*> by_key;
  for (const auto& s : samples) by_key[{s.event_id, s.target_date.iso()}] = &s;
  auto gather = [&](const std::vector<SampleKey>& keys) {
    std::vector<WindowSample> out;
    for (const auto& k : keys) {
      const auto it = by_key.find(k);
      if (it == by_key.end()) throw LookupError("sample " + k.event_id + " " + k.target_date + " not found");
      out.push_back(*it->second);
    }
    return out;
  };

  std::vector<std::string> errors(n);
  parallel_for(static_cast<int>(n), parallel, [&](int i) {
    const int year = m.years[i];
    try {
      const auto& fp = plan.per_year.at(year);
      auto train = gather(fp.train_samples);
      const auto stats = compute_channel_stats(train);
      train = normalize(std::move(train), stats);
      const auto val = normalize(gather(plan.shared_validation), stats);
      TrainConfig c = cfg;
      c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(year), 0xc0ee);
      auto run = train_run(model_config, train, val, c);
      if (run.record.aborted) throw Error(run.record.abort_reason);
      for (std::size_t j = 0; j < n; ++j) {
        const auto test = normalize(gather(plan.per_year.at(m.years[j]).test_samples), stats);
        const auto pred = predict_scores(run.model, test, cfg.eval_batch_size);
        m.ap[i][j] = average_precision(pred.scores, pred.labels);
      }
    } catch (const std::exception& e) {
      errors[i] = "train year " + std::to_string(year) + ": " + e.what();
      log_warning(errors[i]);
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) m.failures.push_back(e);
  }

  std::vector<double> diag, off;
  for (std::size_t i = 0; i < n; ++i) {
    m.row_mean.push_back(nan_mean(m.ap[i]));
    std::vector<double> col;
    for (std::size_t j = 0; j < n; ++j) {
      col.push_back(m.ap[j][i]);
      (i == j ? diag : off).push_back(m.ap[i][j]);
    }
    m.col_mean.push_back(nan_mean(col));
  }
  m.diagonal_mean = nan_mean(diag);
  m.off_diagonal_mean = nan_mean(off);
  return m;
}

json to_json(const CrossYearMatrix& m) {
  json cells = json::array();
  for (const auto& row : m.ap) {
    json r = json::array();
    for (double v : row) r.push_back(num(v));
    cells.push_back(r);
  }
  json rows = json::array(), cols = json::array();
  for (double v : m.row_mean) rows.push_back(num(v));
  for (double v : m.col_mean) cols.push_back(num(v));
  return {{"years", m.years},
          {"ap", cells},
          {"row_mean", rows},
          {"col_mean", cols},
          {"diagonal_mean", num(m.diagonal_mean)},
          {"off_diagonal_mean", num(m.off_diagonal_mean)},
          {"failures", m.failures}};
}

// ---------------------------------------------------------------------------

DatasetDiff dataset_diff(const std::filesystem::path& root_a, const std::filesystem::path& root_b) {
  const auto a = load_dataset(root_a);
  const auto b = load_dataset(root_b);
  if (a.schema != b.schema) throw SchemaMismatchError("datasets have different channel schemas");
  std::map<std::string, const FireEventCube*> ea, eb;
  for (const auto& e : a.events) ea[std::to_string(e.year) + "/" + e.event_id] = &e;
  for (const auto& e : b.events) eb[std::to_string(e.year) + "/" + e.event_id] = &e;
  DatasetDiff diff;
  for (const auto& [k, e] : ea) {
    if (eb.count(k)) {
      diff.compared_events.push_back(k);
    } else {
      diff.only_in_a.push_back(k);
    }
  }
  for (const auto& [k, e] : eb) {
    if (!ea.count(k)) diff.only_in_b.push_back(k);
  }
  if (diff.compared_events.empty()) {
    std::string msg = "datasets share no events; only in A:";
    for (const auto& k : diff.only_in_a) msg += " " + k;
    msg += "; only in B:";
    for (const auto& k : diff.only_in_b) msg += " " + k;
    throw LookupError(msg);
  }
  const std::size_t channels = a.schema.size();
  struct Acc {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    void add(double v) {
      sum += v;
      sq += v * v;
      ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
    double std() const { return n > 1 ? std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1))) : 0.0; }
  };
  std::vector<Acc> acc_a(channels), acc_b(channels);
  for (const auto& k : diff.compared_events) {
    for (auto [cube, acc] : {std::pair{ea[k], &acc_a}, std::pair{eb[k], &acc_b}}) {
      for (int d = 0; d < cube->days(); ++d) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (float v : cube->plane(d, static_cast<int>(c))) {
            if (std::isfinite(v)) (*acc)[c].add(v);
          }
        }
      }
    }
  }
  auto rel = [](double x, double y) {
    const double scale = std::abs(x);
    return scale > 0.0 ? std::abs(x - y) / scale : std::abs(x - y);
  };
  for (std::size_t c = 0; c < channels; ++c) {
    BandDiff bd;
    bd.name = a.schema[c].name;
    bd.mean_a = acc_a[c].mean();
    bd.mean_b = acc_b[c].mean();
    bd.std_a = acc_a[c].std();
    bd.std_b = acc_b[c].std();
    bd.mean_rel_diff = rel(bd.mean_a, bd.mean_b);
    bd.std_rel_diff = rel(bd.std_a, bd.std_b);
    const double worst = std::max(bd.mean_rel_diff, bd.std_rel_diff);
    if (worst > diff.max_rel_diff || diff.max_band.empty()) {
      diff.max_rel_diff = worst;
      diff.max_band = bd.name;
    }
    diff.bands.push_back(bd);
  }
  return diff;
}

json to_json(const DatasetDiff& d) {
  json bands = json::array();
  for (const auto& b : d.bands) {
    bands.push_back({{"name", b.name},
                     {"mean_a", b.mean_a},
                     {"mean_b", b.mean_b},
                     {"std_a", b.std_a},
                     {"std_b", b.std_b},
                     {"mean_rel_diff", b.mean_rel_diff},
                     {"std_rel_diff", b.std_rel_diff},
                     {"max_rel_diff_percent", 100.0 * std::max(b.mean_rel_diff, b.std_rel_diff)}});
  }
  return {{"compared_events", d.compared_events.size()},
          {"only_in_a", d.only_in_a},
          {"only_in_b", d.only_in_b},
          {"bands", bands},
          {"max_rel_diff", d.max_rel_diff},
          {"max_rel_diff_percent", 100.0 * d.max_rel_diff},
          {"max_band", d.max_band}};
}

// ---------------------------------------------------------------------------

std::vector<EmbeddingRow> embedding_export(const Model<float>& model, const std::vector<WindowSample>& samples,
                                           int batch_size) {
  std::vector<EmbeddingRow> rows;
  for (std::size_t first = 0; first < samples.size(); first += batch_size) {
    const std::size_t last = std::min(samples.size(), first + static_cast<std::size_t>(batch_size));
    std::vector<const WindowSample*> batch;
    for (std::size_t i = first; i < last; ++i) batch.push_back(&samples[i]);
    const auto emb = model.embed(make_input<float>(std::span<const WindowSample* const>(batch)));
    const int d = emb.dim(1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      EmbeddingRow r;
      r.event_id = batch[b]->event_id;
      r.date = batch[b]->target_date.iso();
      r.year = batch[b]->year;
      for (int k = 0; k < d; ++k) r.features.push_back(emb[b * d + k]);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void write_embeddings_csv(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "event_id,date,year";
  const std::size_t d = rows.empty() ? 0 : rows.front().features.size();
  for (std::size_t k = 0; k < d; ++k) out << ",f" << k;
  out << "\n";
  out.precision(9);
  for (const auto& r : rows) {
    out << r.event_id << "," << r.date << "," << r.year;
    for (double v : r.features) out << "," << v;
    out << "\n";
  }
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace wildfire
