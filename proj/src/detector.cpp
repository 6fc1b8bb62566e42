#include "ndl/detector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ndl/errors.hpp"
#include "ndl/segment.hpp"

namespace ndl::detect {

std::vector<Candidate> scan(const Recording& r, const NdlParams& params, double threshold, int stride,
                            bool standardize) {
    validate_recording(r);
    if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("scan: threshold must be inside (0, 1)");
    if (stride < 1) throw ParameterError("scan: stride must be >= 1");
    const int T = params.hyper.T;
    const int p = params.hyper.p;
    const std::int64_t width = static_cast<std::int64_t>(T) + p;
    std::vector<Candidate> out;
    if (r.length() < width) return out;

    ModelEngine engine(params.hyper);
    engine.set_params(params);
    Eigen::MatrixXd window, X, Z;
    for (std::int64_t start = 0; start + width <= r.length(); start += stride) {
        window = r.samples.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(width))
                     .cast<double>();
        if (standardize) window = standardize_segment(window);
        split_window(window, T, p, X, Z);
        const auto f = engine.forward(X, Z);
        if (f.prob > threshold) {
            Candidate c;
            c.center = start + width / 2;
            c.prob = f.prob;
            c.importance = f.alpha.rowwise().sum();
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<int> gate(const Candidate& c) {
    const Eigen::Index d = c.importance.size();
    if (d < 1) throw ParameterError("gate: empty importance vector");
    const double cutoff = 1.5 / static_cast<double>(d) * c.importance.sum();
    std::vector<int> passing;
    for (Eigen::Index l = 0; l < d; ++l) {
        if (c.importance[l] > cutoff) passing.push_back(static_cast<int>(l));
    }
    return passing;
}

std::vector<Candidate> dedup_candidates(const std::vector<Candidate>& candidates, double eps, int min_pts) {
    if (min_pts < 1) throw ParameterError("dedup: min_pts must be >= 1");
    if (!(eps >= 0.0)) throw ParameterError("dedup: eps must be >= 0");
    const std::size_t n = candidates.size();
    if (n == 0) return {};
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return candidates[a].center < candidates[b].center; });

    // Neighbor ranges on the sorted axis via two pointers.
    std::vector<std::size_t> lo(n), hi(n);
    {
        std::size_t l = 0, h = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = static_cast<double>(candidates[order[i]].center);
            while (static_cast<double>(candidates[order[l]].center) < c - eps) ++l;
            if (h < i) h = i;
            while (h + 1 < n && static_cast<double>(candidates[order[h + 1]].center) <= c + eps) ++h;
            lo[i] = l;
            hi[i] = h;
        }
    }
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = (hi[i] - lo[i] + 1) >= static_cast<std::size_t>(min_pts);

    // Flood-fill clusters from core points; border points join the first
    // cluster that reaches them, noise stays unassigned.
    std::vector<int> cluster(n, -1);
    int next_cluster = 0;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || cluster[i] != -1) continue;
        const int id = next_cluster++;
        cluster[i] = id;
        stack.push_back(i);
        while (!stack.empty()) {
            const std::size_t j = stack.back();
            stack.pop_back();
            if (!core[j]) continue;  // border points do not expand
            for (std::size_t k = lo[j]; k <= hi[j]; ++k) {
                if (cluster[k] == -1) {
                    cluster[k] = id;
                    if (core[k]) stack.push_back(k);
                }
            }
        }
    }

    // Representative per cluster: max prob, tie -> earliest center.
    std::vector<std::size_t> rep(static_cast<std::size_t>(next_cluster), SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        const int id = cluster[i];
        if (id < 0) continue;
        const std::size_t cand = order[i];
        auto& best = rep[static_cast<std::size_t>(id)];
        if (best == SIZE_MAX || candidates[cand].prob > candidates[best].prob ||
            (candidates[cand].prob == candidates[best].prob && candidates[cand].center < candidates[best].center)) {
            best = cand;
        }
    }
    std::vector<Candidate> out;
    out.reserve(rep.size());
    for (auto idx : rep) {
        if (idx != SIZE_MAX) out.push_back(candidates[idx]);
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.center < b.center; });
    return out;
}

std::vector<Annotation> dedup(const std::vector<Candidate>& candidates, double eps, int min_pts,
                              const Recording& r) {
    const auto reps = dedup_candidates(candidates, eps, min_pts);
    std::vector<Annotation> out;
    out.reserve(reps.size());
    for (const auto& c : reps) {
        Annotation a;
        a.center = c.center;
        a.center_seconds = static_cast<double>(c.center) / r.fs;
        a.prob = c.prob;
        for (int l : gate(c)) {
            a.top_channels.emplace_back(r.channel_names[static_cast<std::size_t>(l)], c.importance[l]);
        }
        std::stable_sort(a.top_channels.begin(), a.top_channels.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<Annotation> annotate_recording(const Recording& r, const NdlParams& params, double threshold,
                                           int stride, double eps, int min_pts, bool standardize) {
    auto candidates = scan(r, params, threshold, stride, standardize);
    std::vector<Candidate> gated;
    gated.reserve(candidates.size());
    for (auto& c : candidates) {
        if (!gate(c).empty()) gated.push_back(std::move(c));
    }
    return dedup(gated, eps, min_pts, r);
}

void write_annotations_jsonl(std::ostream& os, const std::vector<Annotation>& annotations,
                             const std::string& header_note) {
    os << "# ndl annotations v1";
    if (!header_note.empty()) os << ' ' << header_note;
    os << '\n';
    for (const auto& a : annotations) {
        nlohmann::json top = nlohmann::json::array();
        for (const auto& [name, importance] : a.top_channels) {
            top.push_back({{"name", name}, {"importance", importance}});
        }
        const nlohmann::json line = {{"center_sample", a.center},
                                     {"center_seconds", a.center_seconds},
                                     {"prob", a.prob},
                                     {"top_channels", top}};
        os << line.dump() << '\n';
    }
}

std::vector<Annotation> read_annotations_jsonl(std::istream& is) {
    std::vector<Annotation> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto j = nlohmann::json::parse(line);
        Annotation a;
        a.center = j.at("center_sample").get<std::int64_t>();
        a.center_seconds = j.at("center_seconds").get<double>();
        a.prob = j.at("prob").get<double>();
        for (const auto& t : j.at("top_channels")) {
            a.top_channels.emplace_back(t.at("name").get<std::string>(), t.at("importance").get<double>());
        }
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace ndl::detect
