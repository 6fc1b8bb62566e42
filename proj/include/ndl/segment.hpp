#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "ndl/recording.hpp"

namespace ndl {

// d x T window of interest.
struct MultiChannelSegment {
    Eigen::MatrixXd X;
    double fs = 0.0;
    std::optional<std::int64_t> origin_time;  // center sample index in the source recording
};

// d x p surrounding-signal context paired with a segment.
struct AuxContext {
    Eigen::MatrixXd Z;
};

struct SegmentWindow {
    MultiChannelSegment segment;
    AuxContext context;
    std::int64_t center = 0;
};

// Slide a T+p window with the given stride. Within each window the middle T
// columns form X and the two p/2 flanks, concatenated per channel, form Z.
// Windows that would overflow the recording are dropped; too-short recordings
// yield an empty sequence. p must be even, stride >= 1.
std::vector<SegmentWindow> segment_stream(const Recording& r, int T, int p, int stride);

// Split one d x (T+p) window into (X, Z) by the middle/flank convention.
void split_window(const Eigen::MatrixXd& window, int T, int p, Eigen::MatrixXd& X, Eigen::MatrixXd& Z);

// Row-center, then divide by the population standard deviation of all
// entries of the centered matrix. A zero-variance matrix comes back all zero
// (std clamped at 1e-8 instead of producing NaN).
Eigen::MatrixXd standardize_segment(const Eigen::MatrixXd& m);

}  // namespace ndl
