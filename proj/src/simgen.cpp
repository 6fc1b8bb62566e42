#include "ndl/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ndl/errors.hpp"
#include "ndl/segment.hpp"

namespace ndl::sim {

namespace {

constexpr double kLnClamp = 1e-12;
constexpr int kArBurnIn = 256;

// substream tags
constexpr std::uint64_t kTruthStream = 0x7271;
constexpr std::uint64_t kSampleStreamBase = 0x10000;

}  // namespace

void validate_sim_config(const SimConfig& c) {
    if (c.d < 1) throw ParameterError("sim: d must be >= 1");
    if (c.T < 1) throw ParameterError("sim: T must be >= 1");
    if (c.p < 2 || c.p % 2 != 0) throw ParameterError("sim: p must be even and >= 2");
    if (c.n < 1) throw ParameterError("sim: n must be >= 1");
}

double omega_star(int fn_index, const Eigen::VectorXd& x) {
    const int T = static_cast<int>(x.size());
    if (T < 1) throw ParameterError("omega_star: empty input");
    const double mu = x.mean();
    const double raw2 = x.squaredNorm() / static_cast<double>(T);
    const double var = std::max(raw2 - mu * mu, 0.0);
    switch (fn_index) {
        case 0:
            return std::log(std::max(var, kLnClamp));
        case 1:
            return -std::log(std::max(var, kLnClamp));
        case 2:
        case 3:
        case 4:
        case 5: {
            const double sigma = std::sqrt(std::max(var, kLnClamp));
            const Eigen::ArrayXd z = (x.array() - mu) / sigma;
            if (fn_index == 2) return z.cube().mean();
            if (fn_index == 3) return -z.cube().mean();
            const double kurt = z.pow(4).mean() - 3.0;
            return fn_index == 4 ? kurt : -kurt;
        }
        case 6:
            return std::log(std::max((x.array() * x.array().sin()).abs().sum(), kLnClamp));
        case 7:
            return std::log(std::max((x.array() * x.array().cos()).abs().sum(), kLnClamp));
        default:
            throw ParameterError("omega_star: bank index must be in 0..7");
    }
}

Eigen::MatrixXd alpha_star_of(const Eigen::MatrixXd& X, const std::vector<int>& omega_choice) {
    const Eigen::Index d = X.rows();
    const Eigen::Index p = static_cast<Eigen::Index>(omega_choice.size());
    Eigen::MatrixXd omega(d, p);
    for (Eigen::Index l = 0; l < d; ++l) {
        const Eigen::VectorXd row = X.row(l);
        for (Eigen::Index k = 0; k < p; ++k) {
            omega(l, k) = omega_star(omega_choice[static_cast<std::size_t>(k)], row);
        }
    }
    return softmax_columns(omega);
}

BaseSource::BaseSource(const SimConfig& config) : d_(config.d), width_(config.T + config.p) {
    if (config.p % 2 != 0) throw ParameterError("sim: p must be even");
    if (!config.base_source.empty()) {
        recording_ = read_recording(config.base_source);
        if (recording_->channels() != d_) {
            throw ValidationError("sim: recording channel count does not match configured d");
        }
        if (recording_->length() < width_) {
            throw ValidationError("sim: recording shorter than T+p samples");
        }
    }
}

Eigen::MatrixXd BaseSource::draw(Rng& rng) const {
    Eigen::MatrixXd base(d_, width_);
    if (recording_) {
        const std::int64_t span = recording_->length() - width_;
        const std::int64_t start = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(span + 1)));
        base = recording_->samples.middleCols(static_cast<Eigen::Index>(start), width_).cast<double>();
    } else {
        for (int l = 0; l < d_; ++l) {
            double x1 = 0.0, x2 = 0.0;
            for (int t = 0; t < kArBurnIn; ++t) {
                const double x = 1.3 * x1 - 0.4 * x2 + rng.normal();
                x2 = x1;
                x1 = x;
            }
            for (int t = 0; t < width_; ++t) {
                const double x = 1.3 * x1 - 0.4 * x2 + rng.normal();
                base(l, t) = x;
                x2 = x1;
                x1 = x;
            }
        }
    }
    return standardize_segment(base);
}

Eigen::MatrixXd gen_base_matrix(const SimConfig& config, Rng& rng) {
    return BaseSource(config).draw(rng);
}

SimTruth build_truth(const SimConfig& config, Rng& rng) {
    SimTruth t;
    t.omega_choice.resize(static_cast<std::size_t>(config.p));
    for (auto& c : t.omega_choice) c = static_cast<int>(rng.uniform_int(kOmegaBankSize));
    t.beta1.resize(config.T);
    for (int i = 0; i < config.T; ++i) t.beta1[i] = rng.normal();
    t.beta2.resize(config.p);
    for (int i = 0; i < config.p; ++i) t.beta2[i] = rng.normal();
    t.beta0 = rng.normal();
    return t;
}

Eigen::MatrixXd aggregate_direct(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& alpha) {
    const Eigen::Index d = X.rows();
    const Eigen::Index T = X.cols();
    const Eigen::Index p = alpha.cols();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(T, p);
    for (Eigen::Index l = 0; l < d; ++l) {
        S.noalias() += X.row(l).transpose() * alpha.row(l);
        const double shift = alpha.row(l).dot(Z.row(l));
        S.array() += shift;
    }
    return S;
}

SimDataset sample_dataset(const SimConfig& config, const SimTruth& truth) {
    validate_sim_config(config);
    if (static_cast<int>(truth.omega_choice.size()) != config.p || truth.beta1.size() != config.T ||
        truth.beta2.size() != config.p) {
        throw DimensionError("sim: truth dimensions do not match config");
    }
    const BaseSource source(config);
    SimDataset ds;
    ds.d = config.d;
    ds.T = config.T;
    ds.p = config.p;
    ds.seed = config.seed;
    ds.truth = truth;
    ds.samples.reserve(static_cast<std::size_t>(config.n));
    for (std::int64_t i = 0; i < config.n; ++i) {
        Rng rng(Rng::derive(config.seed, kSampleStreamBase + static_cast<std::uint64_t>(i)));
        const Eigen::MatrixXd base = source.draw(rng);
        SimSample s;
        split_window(base, config.T, config.p, s.X, s.Z);
        s.alpha_star = alpha_star_of(s.X, truth.omega_choice);
        const Eigen::MatrixXd S = aggregate_direct(s.X, s.Z, s.alpha_star);
        const double lin = truth.beta1.dot(S * truth.beta2) + truth.beta0;
        // clamp away from exact 0/1 when the logistic saturates in double
        s.g_star = std::clamp(1.0 / (std::exp(-lin) + 1.0), std::numeric_limits<double>::min(),
                              std::nextafter(1.0, 0.0));
        s.y = rng.uniform01() < s.g_star ? 1 : 0;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<LabeledSample> to_labeled(const SimDataset& ds) {
    std::vector<LabeledSample> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.push_back(LabeledSample{s.X, s.Z, s.y});
    return out;
}

// --- persistence -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'D', 'L', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw CorruptionError(std::string("ndls: truncated while reading ") + what);
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(os, m(r, c));
    }
}

void get_matrix(std::istream& is, Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_le<double>(is, "matrix entry");
    }
}

const char* kB64Alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string encode_f64_vector(const Eigen::VectorXd& v) {
    return base64_encode(reinterpret_cast<const unsigned char*>(v.data()), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Eigen::VectorXd decode_f64_vector(const std::string& text, Eigen::Index expected) {
    const auto bytes = base64_decode(text);
    if (bytes.size() != sizeof(double) * static_cast<std::size_t>(expected)) {
        throw CorruptionError("truth sidecar: vector byte length mismatch");
    }
    Eigen::VectorXd v(expected);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

}  // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < len ? kB64Alphabet[((b1 & 0xF) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[b2 & 0x3F] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    int buf = 0, bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = value_of(c);
        if (v < 0) throw FormatError("base64: invalid character");
        buf = (buf << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((buf >> bits) & 0xFF));
        }
    }
    return out;
}

void save_dataset(const SimDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("ndls: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put_le<std::uint32_t>(os, kVersion);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ds.samples.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.d));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.T));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.p));
    put_le<std::uint64_t>(os, ds.seed);
    put_le<std::uint8_t>(os, ds.truth.has_value() ? 1 : 0);
    for (const auto& s : ds.samples) {
        put_matrix(os, s.X);
        put_matrix(os, s.Z);
        put_le<std::uint8_t>(os, static_cast<std::uint8_t>(s.y));
        if (ds.truth) {
            put_matrix(os, s.alpha_star);
            put_le<double>(os, s.g_star);
        }
    }
    if (!os) throw IoError("ndls: write failed for '" + path + "'");

    if (ds.truth) {
        std::ofstream ts(path + ".truth", std::ios::trunc);
        if (!ts) throw IoError("truth sidecar: cannot open '" + path + ".truth' for writing");
        ts << "ndl_truth_version = 1\n";
        ts << "seed = " << ds.seed << "\n";
        ts << "d = " << ds.d << "\n";
        ts << "T = " << ds.T << "\n";
        ts << "p = " << ds.p << "\n";
        ts << "n = " << ds.samples.size() << "\n";
        ts << "omega_choice = ";
        for (std::size_t i = 0; i < ds.truth->omega_choice.size(); ++i) {
            if (i) ts << ',';
            ts << ds.truth->omega_choice[i];
        }
        ts << "\n";
        Eigen::VectorXd b0(1);
        b0[0] = ds.truth->beta0;
        ts << "beta0 = " << encode_f64_vector(b0) << "\n";
        ts << "beta1 = " << encode_f64_vector(ds.truth->beta1) << "\n";
        ts << "beta2 = " << encode_f64_vector(ds.truth->beta2) << "\n";
        Eigen::VectorXd gstar(static_cast<Eigen::Index>(ds.samples.size()));
        for (std::size_t i = 0; i < ds.samples.size(); ++i) gstar[static_cast<Eigen::Index>(i)] = ds.samples[i].g_star;
        ts << "gstar = " << encode_f64_vector(gstar) << "\n";
        if (!ts) throw IoError("truth sidecar: write failed");
    }
}

SimDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("ndls: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("ndls: bad magic in '" + path + "'");
    }
    const auto version = get_le<std::uint32_t>(is, "version");
    if (version != kVersion) throw VersionError("ndls: unsupported version " + std::to_string(version));
    const auto n = get_le<std::uint64_t>(is, "sample count");
    SimDataset ds;
    ds.d = static_cast<int>(get_le<std::uint32_t>(is, "d"));
    ds.T = static_cast<int>(get_le<std::uint32_t>(is, "T"));
    ds.p = static_cast<int>(get_le<std::uint32_t>(is, "p"));
    ds.seed = get_le<std::uint64_t>(is, "seed");
    const bool has_truth = get_le<std::uint8_t>(is, "truth flag") != 0;
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        get_matrix(is, s.X, ds.d, ds.T);
        get_matrix(is, s.Z, ds.d, ds.p);
        s.y = get_le<std::uint8_t>(is, "label");
        if (has_truth) {
            get_matrix(is, s.alpha_star, ds.d, ds.p);
            s.g_star = get_le<double>(is, "g_star");
        }
    }

    if (has_truth) {
        std::ifstream ts(path + ".truth");
        if (!ts) throw IoError("truth sidecar: cannot open '" + path + ".truth'");
        SimTruth truth;
        std::string line;
        std::string gstar_b64;
        while (std::getline(ts, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw FormatError("truth sidecar: expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "ndl_truth_version") {
                if (std::stoi(value) != 1) throw VersionError("truth sidecar: unsupported version");
            } else if (key == "omega_choice") {
                std::istringstream vs(value);
                std::string tok;
                while (std::getline(vs, tok, ',')) truth.omega_choice.push_back(std::stoi(tok));
            } else if (key == "beta0") {
                truth.beta0 = decode_f64_vector(value, 1)[0];
            } else if (key == "beta1") {
                truth.beta1 = decode_f64_vector(value, ds.T);
            } else if (key == "beta2") {
                truth.beta2 = decode_f64_vector(value, ds.p);
            } else if (key == "gstar") {
                gstar_b64 = value;
            } else if (key == "seed" || key == "d" || key == "T" || key == "p" || key == "n") {
                // dimensions live in the binary header; sidecar copies are informational
            } else {
                throw FormatError("truth sidecar: unknown key '" + key + "'");
            }
        }
        if (static_cast<int>(truth.omega_choice.size()) != ds.p) {
            throw CorruptionError("truth sidecar: omega_choice length mismatch");
        }
        if (!gstar_b64.empty()) {
            const Eigen::VectorXd gs = decode_f64_vector(gstar_b64, static_cast<Eigen::Index>(ds.samples.size()));
            for (std::size_t i = 0; i < ds.samples.size(); ++i) {
                if (gs[static_cast<Eigen::Index>(i)] != ds.samples[i].g_star) {
                    throw CorruptionError("truth sidecar: g* disagrees with container");
                }
            }
        }
        ds.truth = std::move(truth);
    }
    return ds;
}

}  // namespace ndl::sim
