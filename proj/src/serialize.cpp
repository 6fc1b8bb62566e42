#include "ndl/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ndl/errors.hpp"

namespace ndl {

namespace {

constexpr int kModelVersion = 1;

std::string join_widths(const std::vector<int>& w) {
    std::ostringstream os;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) os << ',';
        os << w[i];
    }
    return os.str();
}

std::vector<int> parse_widths(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool try_get_le(std::istream& is, T& v) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (is.gcount() == 0) return false;
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw CorruptionError("model blob: truncated record");
    }
    std::memcpy(&v, buf, sizeof(T));
    return true;
}

}  // namespace

void save_model(const NdlParams& params, const std::string& path) {
    validate_hyper(params.hyper);
    {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw IoError("model: cannot open '" + path + "' for writing");
        os << "ndl_model_version = " << kModelVersion << "\n";
        os << "T = " << params.hyper.T << "\n";
        os << "p = " << params.hyper.p << "\n";
        os << "kernel = " << params.hyper.kernel << "\n";
        os << "omega_widths = " << join_widths(params.hyper.omega_widths) << "\n";
        os << "g_widths = " << join_widths(params.hyper.g_widths) << "\n";
        os << "epochs_completed = " << params.epochs_completed << "\n";
        os << "config_digest = " << params.config_digest << "\n";
        if (!os) throw IoError("model: metadata write failed for '" + path + "'");
    }
    std::ofstream os(path + ".bin", std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("model: cannot open '" + path + ".bin' for writing");
    for (const auto& t : params.tensors) {
        if (t.name.size() > UINT16_MAX) throw ValidationError("model: tensor name too long");
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) put_le<std::uint32_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(sizeof(float) * t.data.size()));
    }
    if (!os) throw IoError("model: blob write failed for '" + path + ".bin'");
}

NdlParams load_model(const std::string& path) {
    std::ifstream ms(path);
    if (!ms) throw IoError("model: cannot open '" + path + "'");
    NdlParams p;
    bool saw_version = false;
    int version = -1;
    std::string line;
    while (std::getline(ms, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("model metadata: expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "ndl_model_version") {
            version = std::stoi(value);
            saw_version = true;
        } else if (key == "T") {
            p.hyper.T = std::stoi(value);
        } else if (key == "p") {
            p.hyper.p = std::stoi(value);
        } else if (key == "kernel") {
            p.hyper.kernel = std::stoi(value);
        } else if (key == "omega_widths") {
            p.hyper.omega_widths = parse_widths(value);
        } else if (key == "g_widths") {
            p.hyper.g_widths = parse_widths(value);
        } else if (key == "epochs_completed") {
            p.epochs_completed = std::stoi(value);
        } else if (key == "config_digest") {
            p.config_digest = value;
        } else {
            throw FormatError("model metadata: unknown key '" + key + "'");
        }
    }
    if (!saw_version) throw FormatError("model metadata: missing ndl_model_version");
    if (version != kModelVersion) {
        throw VersionError("model: unsupported version " + std::to_string(version));
    }
    validate_hyper(p.hyper);

    std::ifstream bs(path + ".bin", std::ios::binary);
    if (!bs) throw IoError("model: cannot open '" + path + ".bin'");
    std::vector<Tensor> tensors;
    for (;;) {
        std::uint16_t name_len;
        if (!try_get_le(bs, name_len)) break;  // clean EOF
        Tensor t;
        t.name.resize(name_len);
        bs.read(t.name.data(), name_len);
        if (bs.gcount() != static_cast<std::streamsize>(name_len)) {
            throw CorruptionError("model blob: truncated tensor name");
        }
        std::uint8_t rank;
        if (!try_get_le(bs, rank)) throw CorruptionError("model blob: truncated rank");
        t.dims.resize(rank);
        for (auto& d : t.dims) {
            if (!try_get_le(bs, d)) throw CorruptionError("model blob: truncated dims");
        }
        t.data.resize(t.size());
        const std::streamsize want = static_cast<std::streamsize>(sizeof(float) * t.data.size());
        bs.read(reinterpret_cast<char*>(t.data.data()), want);
        if (bs.gcount() != want) throw CorruptionError("model blob: truncated tensor data");
        tensors.push_back(std::move(t));
    }

    const auto specs = model_shapes(p.hyper);
    if (tensors.size() != specs.size()) {
        throw CorruptionError("model blob: tensor count does not match architecture");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (tensors[i].name != specs[i].name || tensors[i].dims != specs[i].dims) {
            throw CorruptionError("model blob: tensor '" + tensors[i].name + "' does not match architecture");
        }
    }
    p.tensors = std::move(tensors);
    return p;
}

}  // namespace ndl
