#include "wildfire/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wildfire/errors.hpp"
#include "wildfire/log.hpp"

namespace wildfire {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kClip = 1e-12;

void check_sizes(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ShapeError("loss inputs differ in length");
}

double clip(double p) { return std::clamp(p, kClip, 1.0 - kClip); }

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t count_valid(std::span<const std::uint8_t> valid) {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

double empty_mask() {
  log_warning("loss evaluated on an empty valid mask");
  return kNaN;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::bce: return "bce";
    case LossKind::focal: return "focal";
    case LossKind::dice: return "dice";
    case LossKind::jaccard: return "jaccard";
  }
  return "focal";
}

LossKind parse_loss_kind(std::string_view text) {
  for (auto k : {LossKind::bce, LossKind::focal, LossKind::dice, LossKind::jaccard}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown loss '" + std::string(text) + "'", "loss");
}

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal alpha must lie in (0, 1)", "focal_alpha");
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0", "focal_gamma");
}

double bce_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                std::span<const std::uint8_t> valid, double pos_weight) {
  check_sizes(scores.size(), target.size(), valid.size());
  const std::size_t n = count_valid(valid);
  if (n == 0) return empty_mask();
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!valid[i]) continue;
    const double p = clip(scores[i]);
    sum += target[i] ? -pos_weight * std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(n);
}

double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                  std::span<const std::uint8_t> valid, const FocalConfig& cfg) {
  cfg.validate();
  check_sizes(scores.size(), target.size(), valid.size());
  const std::size_t n = count_valid(valid);
  if (n == 0) return empty_mask();
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!valid[i]) continue;
    const double p = clip(scores[i]);
    const double pt = target[i] ? p : 1.0 - p;
    const double at = target[i] ? cfg.alpha : 1.0 - cfg.alpha;
    sum += -at * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
  }
  return sum / static_cast<double>(n);
}

namespace {

struct Overlap {
  double intersection = 0.0, predicted = 0.0, actual = 0.0;
  std::size_t n = 0;
};

Overlap overlap(std::span<const double> p, std::span<const std::uint8_t> target, std::span<const std::uint8_t> valid) {
  Overlap o;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!valid[i]) continue;
    ++o.n;
    o.predicted += p[i];
    o.actual += target[i];
    o.intersection += p[i] * target[i];
  }
  return o;
}

}  // namespace

double dice_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                 std::span<const std::uint8_t> valid, double eps) {
  check_sizes(scores.size(), target.size(), valid.size());
  const Overlap o = overlap(scores, target, valid);
  if (o.n == 0) return empty_mask();
  return 1.0 - (2.0 * o.intersection + eps) / (o.predicted + o.actual + eps);
}

double jaccard_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                    std::span<const std::uint8_t> valid, double eps) {
  check_sizes(scores.size(), target.size(), valid.size());
  const Overlap o = overlap(scores, target, valid);
  if (o.n == 0) return empty_mask();
  return 1.0 - (o.intersection + eps) / (o.predicted + o.actual - o.intersection + eps);
}

LossValue loss_from_logits(std::span<const double> logits, std::span<const std::uint8_t> target,
                           std::span<const std::uint8_t> valid, const LossOptions& options) {
  check_sizes(logits.size(), target.size(), valid.size());
  LossValue out;
  out.gradient.assign(logits.size(), 0.0);
  const std::size_t n = count_valid(valid);
  if (n == 0) {
    out.value = empty_mask();
    return out;
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  switch (options.kind) {
    case LossKind::bce: {
      const double w = options.pos_weight;
      double sum = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!valid[i]) continue;
        const double z = logits[i];
        const double s = sigmoid(z);
        if (target[i]) {
          sum += w * softplus(-z);
          out.gradient[i] = w * (s - 1.0) * inv_n;
        } else {
          sum += softplus(z);
          out.gradient[i] = s * inv_n;
        }
      }
      out.value = sum * inv_n;
      break;
    }
    case LossKind::focal: {
      options.focal.validate();
      const double gamma = options.focal.gamma;
      double sum = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!valid[i]) continue;
        // p_t = sigmoid(sign * z), log p_t = -softplus(-sign * z)
        const double sign = target[i] ? 1.0 : -1.0;
        const double at = target[i] ? options.focal.alpha : 1.0 - options.focal.alpha;
        const double zt = sign * logits[i];
        const double pt = sigmoid(zt);
        const double qt = sigmoid(-zt);  // 1 - p_t without cancellation
        const double log_pt = -softplus(-zt);
        const double mod = gamma == 0.0 ? 1.0 : std::pow(qt, gamma);
        sum += -at * mod * log_pt;
        // d/dz [-a q^g log p] with dp/dz = sign p q
        out.gradient[i] = -at * sign * mod * (qt - gamma * pt * log_pt) * inv_n;
      }
      out.value = sum * inv_n;
      break;
    }
    case LossKind::dice:
    case LossKind::jaccard: {
      std::vector<double> p(logits.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
      const Overlap o = overlap(p, target, valid);
      const double eps = options.eps;
      if (options.kind == LossKind::dice) {
        const double den = o.predicted + o.actual + eps;
        const double num = 2.0 * o.intersection + eps;
        out.value = 1.0 - num / den;
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (!valid[i]) continue;
          const double dp = -(2.0 * target[i] * den - num) / (den * den);
          out.gradient[i] = dp * p[i] * (1.0 - p[i]);
        }
      } else {
        const double uni = o.predicted + o.actual - o.intersection + eps;
        const double num = o.intersection + eps;
        out.value = 1.0 - num / uni;
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (!valid[i]) continue;
          const double dp = -(target[i] * uni - num * (1.0 - target[i])) / (uni * uni);
          out.gradient[i] = dp * p[i] * (1.0 - p[i]);
        }
      }
      break;
    }
  }
  return out;
}

double alpha_from_prevalence(double prevalence) { return std::clamp(1.0 - prevalence, 0.01, 0.99); }

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  PRCurve curve;
  const double positives = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
  if (positives == 0.0) {
    curve.ap = kNaN;
    return curve;
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    const double precision = tp / (tp + fp);
    const double recall = tp / positives;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.thresholds.push_back(threshold);
    curve.precision.push_back(precision);
    curve.recall.push_back(recall);
  }
  curve.ap = ap;
  return curve;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  return pr_curve(scores, labels).ap;
}

double f1_at_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i]) tp += 1.0;
    else if (predicted) fp += 1.0;
    else if (labels[i]) fn += 1.0;
  }
  const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult result;
  result.n = static_cast<int>(diffs.size());
  if (diffs.empty()) return result;  // p = 1 by convention

  // mid-ranks of |d|, kept doubled so they stay integral
  const std::size_t n = diffs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(diffs[x]) < std::abs(diffs[y]); });
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const long doubled = static_cast<long>(i + 1 + j + 1);  // 2 * mean rank
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0.0) plus2 += rank2[i];
  }
  const long w2 = std::min(plus2, total2 - plus2);
  result.w = static_cast<double>(w2) / 2.0;

  if (n <= 25) {
    // counts[s] = number of sign assignments with doubled W+ equal to s
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (long s = reach; s >= 0; --s) {
        if (counts[s] != 0.0) counts[s + rank2[i]] += counts[s];
      }
      reach += rank2[i];
    }
    double tail = 0.0;
    for (long s = 0; s <= w2; ++s) tail += counts[s];
    result.p = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    result.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (result.w - mean) / std::sqrt(var);
    result.p = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
    result.exact = false;
  }
  return result;
}

}  // namespace wildfire
