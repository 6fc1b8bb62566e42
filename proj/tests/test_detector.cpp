#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ndl/detector.hpp"
#include "ndl/errors.hpp"
#include "ndl/rng.hpp"
#include "ndl/segment.hpp"

using namespace ndl;
using namespace ndl::detect;

namespace {

Hyper scan_hyper() {
    Hyper h;
    h.T = 50;
    h.p = 50;
    h.omega_widths = {4};
    h.g_widths = {4};
    return h;
}

Recording random_recording(Rng& rng, int d, int t0) {
    Recording r;
    r.fs = 250.0;
    r.samples.resize(d, t0);
    for (int c = 0; c < d; ++c) {
        r.channel_names.push_back("ch" + std::to_string(c));
        for (int t = 0; t < t0; ++t) r.samples(c, t) = static_cast<float>(rng.normal());
    }
    return r;
}

Candidate make_candidate(std::int64_t center, double prob) {
    Candidate c;
    c.center = center;
    c.prob = prob;
    c.importance.resize(3);
    c.importance << 2.0, 0.5, 0.5;  // channel 0 clears the 1.5/d gate
    return c;
}

// O(n^2) reference DBSCAN on 1-D points (dist <= eps), min_pts including
// the point itself; returns cluster id per point, -1 for noise.
std::vector<int> reference_dbscan(const std::vector<double>& pts, double eps, int min_pts) {
    const int n = static_cast<int>(pts.size());
    auto neighbors = [&](int i) {
        std::vector<int> out;
        for (int j = 0; j < n; ++j) {
            if (std::abs(pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]) <= eps) out.push_back(j);
        }
        return out;
    };
    std::vector<int> label(static_cast<std::size_t>(n), -2);  // -2 unvisited, -1 noise
    int cluster = -1;
    for (int i = 0; i < n; ++i) {
        if (label[static_cast<std::size_t>(i)] != -2) continue;
        auto nb = neighbors(i);
        if (static_cast<int>(nb.size()) < min_pts) {
            label[static_cast<std::size_t>(i)] = -1;
            continue;
        }
        ++cluster;
        label[static_cast<std::size_t>(i)] = cluster;
        std::vector<int> seeds = nb;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const int q = seeds[s];
            if (label[static_cast<std::size_t>(q)] == -1) label[static_cast<std::size_t>(q)] = cluster;
            if (label[static_cast<std::size_t>(q)] != -2) continue;
            label[static_cast<std::size_t>(q)] = cluster;
            auto qn = neighbors(q);
            if (static_cast<int>(qn.size()) >= min_pts) {
                seeds.insert(seeds.end(), qn.begin(), qn.end());
            }
        }
    }
    return label;
}

}  // namespace

TEST_CASE("scan walks the full center range") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 40);
    Rng rng(1);
    const Recording r = random_recording(rng, 2, 1000);

    const auto candidates = scan(r, params, 1e-9, 1);
    REQUIRE(candidates.size() == 901);
    CHECK(candidates.front().center == 50);
    CHECK(candidates.back().center == 950);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        CHECK(candidates[i].center == candidates[i - 1].center + 1);
    }
}

TEST_CASE("near-one threshold leaves nothing") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 41);
    Rng rng(2);
    const Recording r = random_recording(rng, 2, 500);
    CHECK(scan(r, params, 1.0 - 1e-12, 1).empty());
}

TEST_CASE("scan against a per-center brute-force oracle") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 42);
    Rng rng(3);
    const Recording r = random_recording(rng, 3, 400);

    const auto fast = scan(r, params, 0.2, 7);
    // oracle: evaluate every center through the public single-shot ops
    std::vector<std::pair<std::int64_t, double>> oracle;
    const int width = h.T + h.p;
    for (std::int64_t start = 0; start + width <= r.length(); start += 7) {
        Eigen::MatrixXd window = r.samples.middleCols(start, width).cast<double>();
        window = standardize_segment(window);
        MultiChannelSegment X;
        AuxContext Z;
        split_window(window, h.T, h.p, X.X, Z.Z);
        const double prob = predict_proba(X, Z, params);
        if (prob > 0.2) oracle.emplace_back(start + width / 2, prob);
    }
    REQUIRE(fast.size() == oracle.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
        CHECK(fast[i].center == oracle[i].first);
        CHECK(fast[i].prob == doctest::Approx(oracle[i].second).epsilon(1e-14));
    }
}

TEST_CASE("scan stride decimates the stride-1 centers") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 43);
    Rng rng(4);
    const Recording r = random_recording(rng, 2, 600);
    const auto dense = scan(r, params, 0.1, 1);
    const auto strided = scan(r, params, 0.1, 5);
    std::set<std::int64_t> dense_centers;
    for (const auto& c : dense) dense_centers.insert(c.center);
    for (const auto& c : strided) {
        CHECK(dense_centers.count(c.center) == 1);
        CHECK((c.center - (h.T + h.p) / 2) % 5 == 0);
    }
}

TEST_CASE("scan parameter validation") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 44);
    Rng rng(5);
    const Recording r = random_recording(rng, 2, 300);
    CHECK_THROWS_AS((void)scan(r, params, 0.0, 1), ParameterError);
    CHECK_THROWS_AS((void)scan(r, params, 1.0, 1), ParameterError);
    CHECK_THROWS_AS((void)scan(r, params, 0.5, 0), ParameterError);

    const Recording tiny = random_recording(rng, 2, 50);
    CHECK(scan(tiny, params, 0.5, 1).empty());
}

TEST_CASE("gate threshold arithmetic") {
    Candidate c;
    SUBCASE("one dominant channel") {
        c.importance.resize(4);
        c.importance << 0.4, 0.2, 0.2, 0.2;
        const auto passing = gate(c);
        REQUIRE(passing.size() == 1);
        CHECK(passing[0] == 0);
    }
    SUBCASE("uniform importance never passes") {
        c.importance = Eigen::VectorXd::Constant(5, 3.0);
        CHECK(gate(c).empty());
    }
    SUBCASE("importance [1.6, 0.4]") {
        c.importance.resize(2);
        c.importance << 1.6, 0.4;
        const auto passing = gate(c);
        REQUIRE(passing.size() == 1);
        CHECK(passing[0] == 0);
    }
}

TEST_CASE("dedup clusters chained candidates") {
    Rng rng(6);
    Recording r = random_recording(rng, 3, 100);

    SUBCASE("two chain clusters") {
        std::vector<Candidate> cands = {make_candidate(100, 0.7), make_candidate(105, 0.9),
                                        make_candidate(110, 0.8), make_candidate(400, 0.95)};
        const auto anns = dedup(cands, 20.0, 1, r);
        REQUIRE(anns.size() == 2);
        CHECK(anns[0].center == 105);
        CHECK(anns[0].prob == doctest::Approx(0.9));
        CHECK(anns[1].center == 400);
        CHECK(anns[1].center_seconds == doctest::Approx(400.0 / 250.0));
        REQUIRE(!anns[0].top_channels.empty());
        CHECK(anns[0].top_channels[0].first == "ch0");
    }
    SUBCASE("single candidate survives unchanged") {
        std::vector<Candidate> cands = {make_candidate(42, 0.6)};
        const auto anns = dedup(cands, 10.0, 1, r);
        REQUIRE(anns.size() == 1);
        CHECK(anns[0].center == 42);
        CHECK(anns[0].prob == doctest::Approx(0.6));
    }
    SUBCASE("density chaining matches reference dbscan") {
        std::vector<Candidate> cands = {make_candidate(0, 0.5), make_candidate(10, 0.8), make_candidate(20, 0.6),
                                        make_candidate(30, 0.7)};
        const auto reps = dedup_candidates(cands, 10.0, 1);
        REQUIRE(reps.size() == 1);
        CHECK(reps[0].center == 10);

        const auto labels = reference_dbscan({0, 10, 20, 30}, 10.0, 1);
        std::set<int> ids(labels.begin(), labels.end());
        CHECK(ids.size() == 1);  // one cluster, no noise
    }
    SUBCASE("random instances match reference dbscan clustering") {
        for (int rep = 0; rep < 20; ++rep) {
            const int n = 1 + static_cast<int>(rng.uniform_int(40));
            std::vector<Candidate> cands;
            std::vector<double> pts;
            std::set<std::int64_t> used;
            for (int i = 0; i < n; ++i) {
                std::int64_t center = static_cast<std::int64_t>(rng.uniform_int(500));
                while (used.count(center)) ++center;
                used.insert(center);
                cands.push_back(make_candidate(center, rng.uniform01()));
            }
            std::sort(cands.begin(), cands.end(),
                      [](const Candidate& a, const Candidate& b) { return a.center < b.center; });
            for (const auto& c : cands) pts.push_back(static_cast<double>(c.center));
            const double eps = 1.0 + 30.0 * rng.uniform01();
            const int min_pts = 1 + static_cast<int>(rng.uniform_int(3));

            const auto labels = reference_dbscan(pts, eps, min_pts);
            // expected representative per reference cluster
            std::map<int, std::size_t> best;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const int id = labels[i];
                if (id < 0) continue;
                if (!best.count(id) || cands[i].prob > cands[best[id]].prob) best[id] = i;
            }
            std::vector<std::int64_t> expect;
            for (const auto& [id, i] : best) expect.push_back(cands[i].center);
            std::sort(expect.begin(), expect.end());

            const auto reps = dedup_candidates(cands, eps, min_pts);
            REQUIRE(reps.size() == expect.size());
            for (std::size_t i = 0; i < reps.size(); ++i) CHECK(reps[i].center == expect[i]);
        }
    }
}

TEST_CASE("dedup is idempotent and synthesizes nothing") {
    Rng rng(7);
    std::vector<Candidate> cands;
    std::set<std::int64_t> used;
    for (int i = 0; i < 25; ++i) {
        std::int64_t center = static_cast<std::int64_t>(rng.uniform_int(2000));
        while (used.count(center)) ++center;
        used.insert(center);
        cands.push_back(make_candidate(center, rng.uniform01()));
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.center < b.center; });

    const auto once = dedup_candidates(cands, 50.0, 1);
    CHECK(once.size() <= cands.size());
    std::set<std::int64_t> original;
    for (const auto& c : cands) original.insert(c.center);
    for (const auto& c : once) CHECK(original.count(c.center) == 1);

    const auto twice = dedup_candidates(once, 50.0, 1);
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(twice[i].center == once[i].center);
        CHECK(twice[i].prob == once[i].prob);
    }
}

TEST_CASE("zero recording with a chance-level model annotates nothing") {
    const auto h = scan_hyper();
    const auto params = init_params(h, 45);
    Recording r;
    r.fs = 250.0;
    r.channel_names = {"a", "b"};
    r.samples = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(2, 1000);
    const auto anns = annotate_recording(r, params, 0.9, 4, 50.0);
    CHECK(anns.empty());
}

TEST_CASE("annotation jsonl round trip") {
    std::vector<Annotation> anns;
    Annotation a;
    a.center = 123;
    a.center_seconds = 0.492;
    a.prob = 0.875;
    a.top_channels = {{"T3-C3", 2.5}, {"C3-CZ", 1.75}};
    anns.push_back(a);

    std::ostringstream os;
    write_annotations_jsonl(os, anns, "recording=demo");
    const std::string text = os.str();
    CHECK(text.rfind("# ndl annotations v1", 0) == 0);

    std::istringstream is(text);
    const auto back = read_annotations_jsonl(is);
    REQUIRE(back.size() == 1);
    CHECK(back[0].center == 123);
    CHECK(back[0].prob == doctest::Approx(0.875));
    REQUIRE(back[0].top_channels.size() == 2);
    CHECK(back[0].top_channels[0].first == "T3-C3");

    std::ostringstream empty_os;
    write_annotations_jsonl(empty_os, {}, "");
    std::istringstream empty_is(empty_os.str());
    CHECK(read_annotations_jsonl(empty_is).empty());
}
