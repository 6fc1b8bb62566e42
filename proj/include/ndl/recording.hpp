#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ndl {

// Continuous multichannel recording: one row per channel, f32 samples.
// Matches the NDLR container payload exactly so round trips are bitwise.
struct Recording {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> samples;  // d x T0
    double fs = 0.0;
    std::vector<std::string> channel_names;

    Eigen::Index channels() const { return samples.rows(); }
    Eigen::Index length() const { return samples.cols(); }
};

// Throws ValidationError on any invariant violation (empty, non-finite
// samples, duplicate or missing channel names, fs <= 0).
void validate_recording(const Recording& r);

Recording read_recording(const std::string& path);
void write_recording(const Recording& r, const std::string& path);

}  // namespace ndl
