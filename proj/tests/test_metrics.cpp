#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ndl/errors.hpp"
#include "ndl/metrics.hpp"
#include "ndl/rng.hpp"

using namespace ndl;
using metrics::ScoredLabel;

namespace {

// O(n^2) pairwise oracle: P(s+ > s-) + 0.5 P(tie).
double auc_pairwise_oracle(const std::vector<ScoredLabel>& scores) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (const auto& [sp, yp] : scores) {
        if (yp == 0) continue;
        for (const auto& [sn, yn] : scores) {
            if (yn != 0) continue;
            ++pairs;
            if (sp > sn) {
                wins += 1.0;
            } else if (sp == sn) {
                wins += 0.5;
            }
        }
    }
    return wins / static_cast<double>(pairs);
}

// Exhaustive-threshold oracle: confusion recomputed from scratch at every
// distinct score, step-integrated right-continuously.
double prauc_threshold_oracle(const std::vector<ScoredLabel>& scores) {
    std::set<double, std::greater<double>> thresholds;
    std::int64_t total_pos = 0;
    for (const auto& [s, y] : scores) {
        thresholds.insert(s);
        if (y != 0) ++total_pos;
    }
    double area = 0.0;
    double prev_recall = 0.0;
    for (double thr : thresholds) {
        std::int64_t tp = 0, fp = 0;
        for (const auto& [s, y] : scores) {
            if (s >= thr) {
                if (y != 0) {
                    ++tp;
                } else {
                    ++fp;
                }
            }
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

std::vector<ScoredLabel> random_scores(Rng& rng, int n, bool with_ties) {
    std::vector<ScoredLabel> v;
    bool seen_pos = false, seen_neg = false;
    for (int i = 0; i < n; ++i) {
        double s = rng.uniform01();
        if (with_ties) s = std::round(s * 8.0) / 8.0;
        const int y = rng.uniform01() < 0.4 ? 1 : 0;
        seen_pos |= y == 1;
        seen_neg |= y == 0;
        v.emplace_back(s, y);
    }
    if (!seen_pos) v[0].second = 1;
    if (!seen_neg) v[v.size() - 1].second = 0;
    return v;
}

}  // namespace

TEST_CASE("confusion metrics against direct arithmetic") {
    auto m = metrics::confusion_metrics({3, 1, 4, 2});
    CHECK(m.sensitivity == doctest::Approx(0.6));
    CHECK(m.precision == doctest::Approx(0.75));
    CHECK(m.specificity == doctest::Approx(0.8));
    CHECK(m.f1 == doctest::Approx(2.0 * 0.45 / 1.35));

    auto table2_scale = metrics::confusion_metrics({87, 13, 88, 13});
    CHECK(table2_scale.sensitivity == doctest::Approx(0.87));
    CHECK(table2_scale.precision == doctest::Approx(0.87));
}

TEST_CASE("confusion metrics zero-denominator sentinels") {
    auto m = metrics::confusion_metrics({0, 0, 4, 2});
    CHECK(m.precision == 0.0);
    CHECK_FALSE(m.precision_defined);
    CHECK(m.sensitivity_defined);

    auto all_zero = metrics::confusion_metrics({0, 0, 0, 0});
    CHECK(all_zero.f1 == 0.0);
    CHECK_FALSE(all_zero.sensitivity_defined);
    CHECK_FALSE(all_zero.specificity_defined);
}

TEST_CASE("roc_auc basics") {
    CHECK(metrics::roc_auc({{0.9, 1}, {0.8, 1}, {0.1, 0}, {0.4, 0}}) == doctest::Approx(1.0));
    CHECK(metrics::roc_auc({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}) == doctest::Approx(0.5));
    CHECK_THROWS_AS((void)metrics::roc_auc({{0.5, 1}, {0.7, 1}}), UndefinedMetricError);
}

TEST_CASE("roc_auc matches the pairwise oracle") {
    Rng rng(411);
    for (int rep = 0; rep < 40; ++rep) {
        const auto scores = random_scores(rng, 50, rep % 2 == 0);
        const double expect = auc_pairwise_oracle(scores);
        CHECK(std::abs(metrics::roc_auc(scores) - expect) < 1e-12);
    }
}

TEST_CASE("rank and trapezoid auc agree") {
    Rng rng(902);
    for (int rep = 0; rep < 40; ++rep) {
        const auto scores = random_scores(rng, 60 + rep, rep % 3 == 0);
        CHECK(std::abs(metrics::roc_auc(scores) - metrics::roc_auc_trapezoid(scores)) < 1e-12);
    }
}

TEST_CASE("roc_auc invariances") {
    Rng rng(77);
    const auto scores = random_scores(rng, 80, true);
    const double base = metrics::roc_auc(scores);

    std::vector<ScoredLabel> transformed;
    for (auto [s, y] : scores) transformed.emplace_back(std::exp(3.0 * s + 1.0), y);
    CHECK(metrics::roc_auc(transformed) == doctest::Approx(base).epsilon(1e-12));

    std::vector<ScoredLabel> flipped;
    for (auto [s, y] : scores) flipped.emplace_back(s, 1 - y);
    CHECK(metrics::roc_auc(flipped) == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("pr_auc basics") {
    CHECK(metrics::pr_auc({{0.9, 1}, {0.8, 1}, {0.1, 0}, {0.2, 0}}) == doctest::Approx(1.0));
    // Uninformative constant scores give the positive prevalence.
    CHECK(metrics::pr_auc({{0.5, 1}, {0.5, 0}, {0.5, 0}, {0.5, 0}}) == doctest::Approx(0.25));
    CHECK_THROWS_AS((void)metrics::pr_auc({{0.5, 0}, {0.7, 0}}), UndefinedMetricError);
}

TEST_CASE("pr_auc matches the exhaustive-threshold oracle") {
    Rng rng(5150);
    for (int rep = 0; rep < 40; ++rep) {
        const auto scores = random_scores(rng, 50, rep % 2 == 1);
        const double expect = prauc_threshold_oracle(scores);
        CHECK(std::abs(metrics::pr_auc(scores) - expect) < 1e-12);
    }
}

TEST_CASE("mae_alpha examples and oracle") {
    Eigen::MatrixXd a(2, 2), b(2, 2);
    a << 0.5, 0.2, 0.5, 0.8;
    b = a;
    CHECK(metrics::mae_alpha({a}, {b}) == 0.0);

    Eigen::MatrixXd diff(2, 2);
    diff << 0.3, -0.4, -0.3, 0.4;
    CHECK(metrics::mae_alpha({a + diff}, {a}) == doctest::Approx(std::sqrt(0.5)));

    Rng rng(33);
    std::vector<Eigen::MatrixXd> t, e;
    for (int i = 0; i < 7; ++i) {
        Eigen::MatrixXd x(3, 4), y(3, 4);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                x(r, c) = rng.normal();
                y(r, c) = rng.normal();
            }
        }
        t.push_back(x);
        e.push_back(y);
    }
    // naive double-loop oracle
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        double sq = 0.0;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) sq += (t[i](r, c) - e[i](r, c)) * (t[i](r, c) - e[i](r, c));
        }
        acc += std::sqrt(sq);
    }
    CHECK(metrics::mae_alpha(t, e) == doctest::Approx(acc / 7.0).epsilon(1e-12));

    CHECK_THROWS_AS((void)metrics::mae_alpha({a}, {Eigen::MatrixXd::Zero(3, 2)}), DimensionError);
}

TEST_CASE("mae_g examples and oracle") {
    CHECK(metrics::mae_g({0.2, 0.8}, {0.2, 0.8}) == 0.0);
    CHECK(metrics::mae_g({0.2, 0.8}, {0.3, 0.6}) == doctest::Approx(0.15));

    Rng rng(12);
    std::vector<double> t, e;
    for (int i = 0; i < 31; ++i) {
        t.push_back(rng.normal());
        e.push_back(rng.normal());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += std::abs(t[i] - e[i]);
    CHECK(std::abs(metrics::mae_g(t, e) - acc / 31.0) < 1e-15);

    CHECK_THROWS_AS((void)metrics::mae_g({0.1}, {0.1, 0.2}), DimensionError);
}

TEST_CASE("mae metrics satisfy the triangle inequality") {
    Rng rng(99);
    auto rand_list = [&](int n) {
        std::vector<Eigen::MatrixXd> v;
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXd m(2, 3);
            for (int r = 0; r < 2; ++r) {
                for (int c = 0; c < 3; ++c) m(r, c) = rng.normal();
            }
            v.push_back(m);
        }
        return v;
    };
    for (int rep = 0; rep < 20; ++rep) {
        const auto a = rand_list(5), b = rand_list(5), c = rand_list(5);
        CHECK(metrics::mae_alpha(a, c) <= metrics::mae_alpha(a, b) + metrics::mae_alpha(b, c) + 1e-12);
        std::vector<double> ga, gb, gc;
        for (int i = 0; i < 9; ++i) {
            ga.push_back(rng.normal());
            gb.push_back(rng.normal());
            gc.push_back(rng.normal());
        }
        CHECK(metrics::mae_g(ga, gc) <= metrics::mae_g(ga, gb) + metrics::mae_g(gb, gc) + 1e-12);
    }
}
