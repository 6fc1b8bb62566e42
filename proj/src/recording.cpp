#include "ndl/recording.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "ndl/errors.hpp"

namespace ndl {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'L', 'R'};
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
        throw CorruptionError(std::string("ndlr: truncated while reading ") + what);
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void validate_recording(const Recording& r) {
    const auto d = r.channels();
    const auto t0 = r.length();
    if (d < 1 || t0 < 1) {
        throw ValidationError("recording: needs at least one channel and one sample");
    }
    if (!(r.fs > 0.0) || !std::isfinite(r.fs)) {
        throw ValidationError("recording: sampling rate must be positive and finite");
    }
    if (static_cast<Eigen::Index>(r.channel_names.size()) != d) {
        throw ValidationError("recording: channel name count does not match channel count");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : r.channel_names) {
        if (!seen.insert(n).second) {
            throw ValidationError("recording: duplicate channel name '" + n + "'");
        }
    }
    if (!r.samples.allFinite()) {
        throw ValidationError("recording: non-finite sample values");
    }
}

Recording read_recording(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("ndlr: cannot open '" + path + "' for reading");
    }
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("ndlr: bad magic in '" + path + "'");
    }
    const auto version = get_le<std::uint32_t>(is, "version");
    if (version != kVersion) {
        throw FormatError("ndlr: unsupported version " + std::to_string(version));
    }
    const auto d = get_le<std::uint32_t>(is, "channel count");
    const auto t0 = get_le<std::uint64_t>(is, "sample count");
    const auto fs = get_le<double>(is, "sampling rate");
    if (d == 0 || t0 == 0) {
        throw CorruptionError("ndlr: empty dimensions in header");
    }

    Recording r;
    r.fs = fs;
    r.channel_names.reserve(d);
    for (std::uint32_t i = 0; i < d; ++i) {
        const auto len = get_le<std::uint16_t>(is, "channel name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (is.gcount() != static_cast<std::streamsize>(len)) {
            throw CorruptionError("ndlr: truncated channel name");
        }
        r.channel_names.push_back(std::move(name));
    }

    r.samples.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t0));
    const std::size_t want = sizeof(float) * static_cast<std::size_t>(d) * static_cast<std::size_t>(t0);
    is.read(reinterpret_cast<char*>(r.samples.data()), static_cast<std::streamsize>(want));
    if (is.gcount() != static_cast<std::streamsize>(want)) {
        throw CorruptionError("ndlr: payload shorter than header promises");
    }
    // Anything left over means the writer and header disagree.
    char extra;
    is.read(&extra, 1);
    if (is.gcount() != 0) {
        throw CorruptionError("ndlr: trailing bytes after payload");
    }
    validate_recording(r);
    return r;
}

void write_recording(const Recording& r, const std::string& path) {
    validate_recording(r);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("ndlr: cannot open '" + path + "' for writing");
    }
    os.write(kMagic, 4);
    put_le<std::uint32_t>(os, kVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.channels()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(r.length()));
    put_le<double>(os, r.fs);
    for (const auto& name : r.channel_names) {
        if (name.size() > UINT16_MAX) {
            throw ValidationError("ndlr: channel name too long");
        }
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    os.write(reinterpret_cast<const char*>(r.samples.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(r.samples.size())));
    if (!os) {
        throw IoError("ndlr: write failed for '" + path + "'");
    }
}

}  // namespace ndl
