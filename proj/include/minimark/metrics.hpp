#pragma once

#include <span>
#include <vector>

namespace minimark::eval {

struct ScoreSample {
  double z = 0;
  bool watermarked = false;
  int sequence_id = 0;
};

/// Mann-Whitney statistic: P(z_pos > z_neg) + 0.5·P(tie). Throws
/// DegenerateLabels unless both labels are present.
double auroc(std::span<const ScoreSample> samples);

/// Detection rule is z >= threshold; the threshold is the smallest score
/// keeping the clean false-positive rate at or under fpr_cap (possibly +inf,
/// giving TPR 0).
double tpr_at_fpr(std::span<const ScoreSample> samples, double fpr_cap = 0.05);

/// Unbiased pass@k estimator: 1 − C(n−c, k)/C(n, k) in stable product form.
double pass_at_k(int n, int c, int k);

/// One-sided paired test that `after` is lower than `before` on average;
/// returns the normal-approximation p-value of the paired t statistic.
double paired_one_sided_p(std::span<const double> before, std::span<const double> after);

}  // namespace minimark::eval
