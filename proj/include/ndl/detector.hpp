#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ndl/model.hpp"
#include "ndl/recording.hpp"

namespace ndl::detect {

struct Candidate {
    std::int64_t center = 0;
    double prob = 0.0;
    Eigen::VectorXd importance;  // per-channel, sums to p
};

struct Annotation {
    std::int64_t center = 0;
    double center_seconds = 0.0;
    double prob = 0.0;
    std::vector<std::pair<std::string, double>> top_channels;  // importance-descending
};

// Slide a T+p window by `stride`; every window is standardized, split into
// (X, Z), and scored. Centers with prob > threshold survive, in ascending
// order. standardize=false skips per-window standardization for models
// trained on raw amplitudes.
std::vector<Candidate> scan(const Recording& r, const NdlParams& params, double threshold, int stride,
                            bool standardize = true);

// Channel indices whose importance exceeds 1.5/d of the total importance.
std::vector<int> gate(const Candidate& c);

// 1-D DBSCAN over candidate centers (radius eps, min_pts neighbors including
// the point itself), then one representative per cluster: highest prob, ties
// to the earliest center. Noise points (reachable from no core point) are
// dropped; with min_pts = 1 there are none.
std::vector<Candidate> dedup_candidates(const std::vector<Candidate>& candidates, double eps, int min_pts = 1);

// dedup + annotation assembly (names, seconds, gate-passing channels).
std::vector<Annotation> dedup(const std::vector<Candidate>& candidates, double eps, int min_pts,
                              const Recording& r);

// scan -> gate filter -> dedup.
std::vector<Annotation> annotate_recording(const Recording& r, const NdlParams& params, double threshold,
                                           int stride, double eps, int min_pts = 1, bool standardize = true);

// One JSON object per line after a '#' header comment.
void write_annotations_jsonl(std::ostream& os, const std::vector<Annotation>& annotations,
                             const std::string& header_note);
std::vector<Annotation> read_annotations_jsonl(std::istream& is);

}  // namespace ndl::detect
