#include "ndl/segment.hpp"

#include <cmath>

#include "ndl/errors.hpp"

namespace ndl {

void split_window(const Eigen::MatrixXd& window, int T, int p, Eigen::MatrixXd& X, Eigen::MatrixXd& Z) {
    const int half = p / 2;
    if (p % 2 != 0) throw ParameterError("split_window: p must be even");
    if (window.cols() != T + p) throw DimensionError("split_window: window width must be T+p");
    X = window.middleCols(half, T);
    Z.resize(window.rows(), p);
    Z.leftCols(half) = window.leftCols(half);
    Z.rightCols(half) = window.rightCols(half);
}

std::vector<SegmentWindow> segment_stream(const Recording& r, int T, int p, int stride) {
    validate_recording(r);
    if (T < 1) throw ParameterError("segment_stream: T must be >= 1");
    if (p < 0 || p % 2 != 0) throw ParameterError("segment_stream: p must be even and >= 0");
    if (stride < 1) throw ParameterError("segment_stream: stride must be >= 1");

    const std::int64_t width = static_cast<std::int64_t>(T) + p;
    const std::int64_t t0 = r.length();
    std::vector<SegmentWindow> out;
    for (std::int64_t start = 0; start + width <= t0; start += stride) {
        const Eigen::MatrixXd window =
            r.samples.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(width)).cast<double>();
        SegmentWindow w;
        split_window(window, T, p, w.segment.X, w.context.Z);
        w.segment.fs = r.fs;
        w.center = start + width / 2;
        w.segment.origin_time = w.center;
        out.push_back(std::move(w));
    }
    return out;
}

Eigen::MatrixXd standardize_segment(const Eigen::MatrixXd& m) {
    if (m.size() == 0) throw ParameterError("standardize_segment: empty matrix");
    Eigen::MatrixXd centered = m;
    centered.colwise() -= m.rowwise().mean();
    const double var = centered.array().square().sum() / static_cast<double>(centered.size());
    const double sd = std::sqrt(var);
    return centered / std::max(sd, 1e-8);
}

}  // namespace ndl
