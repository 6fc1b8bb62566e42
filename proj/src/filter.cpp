#include "ndl/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "ndl/errors.hpp"

namespace ndl {

namespace {

using cplx = std::complex<double>;

// Cascade response at z = e^{jw}.
cplx cascade_response(const std::vector<Biquad>& sos, double w) {
    const cplx z1 = std::exp(cplx(0.0, -w));
    const cplx z2 = z1 * z1;
    cplx h(1.0, 0.0);
    for (const auto& s : sos) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return h;
}

}  // namespace

std::vector<Biquad> butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs) {
    if (order < 1) throw ParameterError("butterworth: order must be >= 1");
    if (!(lo_hz > 0.0) || !(lo_hz < hi_hz) || !(hi_hz < fs / 2.0)) {
        throw ParameterError("butterworth: need 0 < lo < hi < fs/2");
    }
    const double k = 2.0 * fs;
    const double w_lo = k * std::tan(M_PI * lo_hz / fs);
    const double w_hi = k * std::tan(M_PI * hi_hz / fs);
    const double bw = w_hi - w_lo;
    const double w0sq = w_lo * w_hi;

    // Low-pass prototype poles on the unit circle, left half-plane.
    std::vector<cplx> proto;
    for (int i = 1; i <= order; ++i) {
        const double theta = M_PI * (2.0 * i + order - 1.0) / (2.0 * order);
        proto.emplace_back(std::cos(theta), std::sin(theta));
    }

    // Low-pass to band-pass: each prototype pole spawns two analog poles.
    std::vector<cplx> analog;
    for (const auto& p : proto) {
        const cplx bp = bw * p;
        const cplx disc = std::sqrt(bp * bp - 4.0 * w0sq);
        analog.push_back((bp + disc) / 2.0);
        analog.push_back((bp - disc) / 2.0);
    }

    // Bilinear transform.
    std::vector<cplx> digital;
    for (const auto& s : analog) {
        digital.push_back((k + s) / (k - s));
    }

    // Group into conjugate pairs: keep one representative per pair.
    std::vector<cplx> upper;
    std::vector<double> reals;
    for (const auto& z : digital) {
        if (z.imag() > 1e-12) {
            upper.push_back(z);
        } else if (z.imag() < -1e-12) {
            // conjugate partner of an upper pole
        } else {
            reals.push_back(z.real());
        }
    }
    std::vector<Biquad> sos;
    for (const auto& z : upper) {
        sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
    std::sort(reals.begin(), reals.end());
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
        sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
    }
    if (static_cast<int>(sos.size()) != order) {
        throw Error("butterworth: pole pairing failed");
    }

    // Normalize to unit gain at the band center.
    const double w_center = 2.0 * std::atan(std::sqrt(w0sq) / k);
    const double mag = std::abs(cascade_response(sos, w_center));
    const double g = 1.0 / mag;
    sos.front().b0 *= g;
    sos.front().b1 *= g;
    sos.front().b2 *= g;
    return sos;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x, int padlen) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    padlen = std::min<int>(padlen, static_cast<int>(n) - 1);
    if (padlen < 0) padlen = 0;

    // Odd reflection about both endpoints keeps the extension continuous in
    // value and slope, which confines startup transients to the pads.
    std::vector<double> ext;
    ext.reserve(n + 2 * static_cast<std::size_t>(padlen));
    for (int i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[static_cast<std::size_t>(i)]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - static_cast<std::size_t>(i)]);

    auto run = [&sos](std::vector<double>& v) {
        for (const auto& s : sos) {
            double s1 = 0.0, s2 = 0.0;
            for (auto& sample : v) {
                const double in = sample;
                const double out = s.b0 * in + s1;
                s1 = s.b1 * in - s.a1 * out + s2;
                s2 = s.b2 * in - s.a2 * out;
                sample = out;
            }
        }
    };
    run(ext);
    std::reverse(ext.begin(), ext.end());
    run(ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + padlen, ext.begin() + padlen + static_cast<std::ptrdiff_t>(n));
}

Recording bandpass_filter(const Recording& r, double lo_hz, double hi_hz) {
    validate_recording(r);
    if (!(lo_hz > 0.0) || !(lo_hz < hi_hz)) {
        throw ParameterError("bandpass: need 0 < lo < hi");
    }
    if (!(hi_hz < r.fs / 2.0)) {
        throw ParameterError("bandpass: hi must stay below the Nyquist frequency");
    }
    const auto sos = butterworth_bandpass(4, lo_hz, hi_hz, r.fs);
    // Pads must outlast the slow transient of the low-frequency edge.
    const int padlen = static_cast<int>(std::min<double>(static_cast<double>(r.length() - 1),
                                                         std::max(50.0, 3.0 * r.fs / lo_hz)));
    Recording out = r;
    std::vector<double> row(static_cast<std::size_t>(r.length()));
    for (Eigen::Index c = 0; c < r.channels(); ++c) {
        for (Eigen::Index t = 0; t < r.length(); ++t) row[static_cast<std::size_t>(t)] = r.samples(c, t);
        const auto y = filtfilt(sos, row, padlen);
        for (Eigen::Index t = 0; t < r.length(); ++t) out.samples(c, t) = static_cast<float>(y[static_cast<std::size_t>(t)]);
    }
    return out;
}

}  // namespace ndl
