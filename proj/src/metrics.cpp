#include "ndl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "ndl/errors.hpp"

namespace ndl::metrics {

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
    ConfusionMetrics m;
    if (c.tp + c.fn > 0) {
        m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    } else {
        m.sensitivity_defined = false;
    }
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    } else {
        m.precision_defined = false;
    }
    if (c.tn + c.fp > 0) {
        m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    } else {
        m.specificity_defined = false;
    }
    const double pr = m.precision + m.sensitivity;
    m.f1 = pr > 0.0 ? 2.0 * m.precision * m.sensitivity / pr : 0.0;
    return m;
}

namespace {

struct ClassCounts {
    std::int64_t pos = 0;
    std::int64_t neg = 0;
};

ClassCounts count_classes(const std::vector<ScoredLabel>& scores) {
    ClassCounts c;
    for (const auto& [s, y] : scores) {
        (void)s;
        if (y != 0) {
            ++c.pos;
        } else {
            ++c.neg;
        }
    }
    return c;
}

std::vector<ScoredLabel> sorted_desc(const std::vector<ScoredLabel>& scores) {
    std::vector<ScoredLabel> v = scores;
    std::sort(v.begin(), v.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.first > b.first; });
    return v;
}

}  // namespace

double roc_auc(const std::vector<ScoredLabel>& scores) {
    const auto cc = count_classes(scores);
    if (cc.pos == 0 || cc.neg == 0) {
        throw UndefinedMetricError("roc_auc: both classes must be present");
    }
    std::vector<ScoredLabel> v = scores;
    std::sort(v.begin(), v.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.first < b.first; });
    // Sum of average ranks over positives; tied scores share the mean rank of
    // their block, which realizes the 1/2-credit tie convention exactly.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j].first == v[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) {
            if (v[k].second != 0) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(cc.pos);
    const double nn = static_cast<double>(cc.neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<std::pair<double, double>> roc_curve(const std::vector<ScoredLabel>& scores) {
    const auto cc = count_classes(scores);
    if (cc.pos == 0 || cc.neg == 0) {
        throw UndefinedMetricError("roc_curve: both classes must be present");
    }
    const auto v = sorted_desc(scores);
    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 0.0);
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j].first == v[i].first) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (v[k].second != 0) {
                ++tp;
            } else {
                ++fp;
            }
        }
        pts.emplace_back(static_cast<double>(fp) / static_cast<double>(cc.neg),
                         static_cast<double>(tp) / static_cast<double>(cc.pos));
        i = j;
    }
    return pts;
}

double roc_auc_trapezoid(const std::vector<ScoredLabel>& scores) {
    const auto pts = roc_curve(scores);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    }
    return area;
}

std::vector<std::pair<double, double>> pr_curve(const std::vector<ScoredLabel>& scores) {
    const auto cc = count_classes(scores);
    if (cc.pos == 0) {
        throw UndefinedMetricError("pr_curve: at least one positive label required");
    }
    const auto v = sorted_desc(scores);
    std::vector<std::pair<double, double>> pts;  // (recall, precision)
    pts.emplace_back(0.0, 1.0);
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j].first == v[i].first) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (v[k].second != 0) {
                ++tp;
            } else {
                ++fp;
            }
        }
        pts.emplace_back(static_cast<double>(tp) / static_cast<double>(cc.pos),
                         static_cast<double>(tp) / static_cast<double>(tp + fp));
        i = j;
    }
    return pts;
}

double pr_auc(const std::vector<ScoredLabel>& scores) {
    const auto pts = pr_curve(scores);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        // Step-wise: precision held at the right endpoint of each recall step.
        area += (pts[i].first - pts[i - 1].first) * pts[i].second;
    }
    return area;
}

double mae_alpha(const std::vector<Eigen::MatrixXd>& truth, const std::vector<Eigen::MatrixXd>& est) {
    if (truth.size() != est.size()) {
        throw DimensionError("mae_alpha: list lengths differ");
    }
    if (truth.empty()) {
        throw ParameterError("mae_alpha: empty input");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].rows() != est[i].rows() || truth[i].cols() != est[i].cols()) {
            throw DimensionError("mae_alpha: matrix shape mismatch");
        }
        acc += (truth[i] - est[i]).norm();
    }
    return acc / static_cast<double>(truth.size());
}

double mae_g(const std::vector<double>& truth, const std::vector<double>& est) {
    if (truth.size() != est.size()) {
        throw DimensionError("mae_g: list lengths differ");
    }
    if (truth.empty()) {
        throw ParameterError("mae_g: empty input");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        acc += std::abs(truth[i] - est[i]);
    }
    return acc / static_cast<double>(truth.size());
}

}  // namespace ndl::metrics
