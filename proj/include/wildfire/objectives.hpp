#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace wildfire {

enum class LossKind { bce, focal, dice, jaccard };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct FocalConfig {
  double alpha = 0.25;  // weight of the positive class, in (0, 1)
  double gamma = 2.0;   // >= 0

  void validate() const;
};

// Probability-space losses. Scores are probabilities in [0, 1] and are
// clipped to [1e-12, 1 - 1e-12] before taking logs; pixels with valid == 0
// are ignored. An empty valid mask yields NaN and a warning.
double bce_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                std::span<const std::uint8_t> valid, double pos_weight = 1.0);
double focal_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                  std::span<const std::uint8_t> valid, const FocalConfig& cfg);
double dice_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                 std::span<const std::uint8_t> valid, double eps);
double jaccard_loss(std::span<const double> scores, std::span<const std::uint8_t> target,
                    std::span<const std::uint8_t> valid, double eps);

struct LossOptions {
  LossKind kind = LossKind::focal;
  double pos_weight = 1.0;  // bce only
  FocalConfig focal;
  double eps = 1.0;  // dice / jaccard smoothing
};

struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d logit, per pixel
};

// The same losses evaluated from logits with stable log-sigmoid forms,
// together with their analytic gradient.
LossValue loss_from_logits(std::span<const double> logits, std::span<const std::uint8_t> target,
                           std::span<const std::uint8_t> valid, const LossOptions& options);

// clip(1 - prevalence, 0.01, 0.99)
double alpha_from_prevalence(double prevalence);

/// Precision/recall at each distinct score, highest threshold first.
struct PRCurve {
  std::vector<double> thresholds;
  std::vector<double> precision;
  std::vector<double> recall;
  double ap = 0.0;
};

// Step-wise AP = sum_n (R_n - R_{n-1}) P_n with tied scores forming one
// threshold. Returns NaN when there are no positive labels.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Predictions are score >= threshold. F1 = 0 when precision + recall = 0.
double f1_at_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold);

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-)
  double p = 1.0;  // two-sided
  int n = 0;       // non-zero differences
  bool exact = true;
};

// Signed-rank test on paired samples. Zero differences are dropped; ties
// get mid-ranks. n <= 25 uses the exact null distribution (with the
// observed mid-ranks), larger n the tie-corrected normal approximation.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace wildfire
