#pragma once

#include <array>
#include <vector>

#include "ndl/recording.hpp"

namespace ndl {

// One biquad, direct form II transposed: b0 b1 b2 / 1 a1 a2.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

// Butterworth band-pass of analog prototype order `order` (2*order poles)
// as cascaded biquads, bilinear-transformed, unity gain at the geometric
// center frequency.
std::vector<Biquad> butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs);

// Zero-phase band-pass: forward-backward application of a 4th-order
// Butterworth cascade with odd-reflection edge padding. Output length equals
// input length. Requires 0 < lo < hi < fs/2.
Recording bandpass_filter(const Recording& r, double lo_hz = 1.0, double hi_hz = 45.0);

// Same filter on a raw double signal (used internally and by tests).
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x, int padlen);

}  // namespace ndl
