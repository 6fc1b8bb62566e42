#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace ndl::metrics {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;
};

// Ratio metrics with explicit flags for zero-denominator cases. When a
// denominator is zero the value is reported as 0 and the flag cleared, so
// reports always carry a total order.
struct ConfusionMetrics {
    double sensitivity = 0.0;
    double precision = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
    bool sensitivity_defined = true;
    bool precision_defined = true;
    bool specificity_defined = true;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);

// (score, label) pairs; label is 0 or 1.
using ScoredLabel = std::pair<double, int>;

// Mann-Whitney rank AUC: P(score+ > score-) + 0.5 P(tie).
// Throws UndefinedMetricError unless both classes are present.
double roc_auc(const std::vector<ScoredLabel>& scores);

// ROC curve points (fpr, tpr) from (0,0) to (1,1), one vertex per distinct
// score. Trapezoid integration of these points must agree with roc_auc; the
// pair acts as an internal cross-check.
std::vector<std::pair<double, double>> roc_curve(const std::vector<ScoredLabel>& scores);
double roc_auc_trapezoid(const std::vector<ScoredLabel>& scores);

// Area under the precision-recall curve by descending-score sweep with
// step-wise (right-continuous) precision. Throws UndefinedMetricError if no
// positive labels are present.
double pr_auc(const std::vector<ScoredLabel>& scores);
std::vector<std::pair<double, double>> pr_curve(const std::vector<ScoredLabel>& scores);

// Mean Frobenius-norm distance between matched weight matrices.
double mae_alpha(const std::vector<Eigen::MatrixXd>& truth, const std::vector<Eigen::MatrixXd>& est);

// Mean absolute difference between matched scalar lists.
double mae_g(const std::vector<double>& truth, const std::vector<double>& est);

}  // namespace ndl::metrics
