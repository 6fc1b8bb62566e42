#include "ndl/montage.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ndl/errors.hpp"

namespace ndl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

MontageSpec parse_montage(const std::string& text) {
    MontageSpec m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("montage: expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "name") {
            m.name = value;
        } else if (key == "common_average") {
            m.common_average = (value == "true" || value == "1");
        } else if (key == "pair") {
            const auto comma = value.find(',');
            if (comma == std::string::npos) {
                throw FormatError("montage: pair must be 'ANODE,CATHODE', got '" + value + "'");
            }
            m.pairs.emplace_back(trim(value.substr(0, comma)), trim(value.substr(comma + 1)));
        } else {
            throw FormatError("montage: unknown key '" + key + "'");
        }
    }
    if (m.common_average && !m.pairs.empty()) {
        throw FormatError("montage: common_average excludes pair lines");
    }
    if (!m.common_average && m.pairs.empty()) {
        throw FormatError("montage: needs pair lines or common_average = true");
    }
    return m;
}

MontageSpec load_montage(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("montage: cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_montage(buf.str());
}

const MontageSpec& tcp_montage() {
    static const MontageSpec spec = [] {
        MontageSpec m;
        m.name = "tcp";
        const char* rows[][2] = {
            {"EEG FP1-REF", "EEG F7-REF"}, {"EEG F7-REF", "EEG T3-REF"},  {"EEG T3-REF", "EEG T5-REF"},
            {"EEG T5-REF", "EEG O1-REF"},  {"EEG FP2-REF", "EEG F8-REF"}, {"EEG F8-REF", "EEG T4-REF"},
            {"EEG T4-REF", "EEG T6-REF"},  {"EEG T6-REF", "EEG O2-REF"},  {"EEG A1-REF", "EEG T3-REF"},
            {"EEG T3-REF", "EEG C3-REF"},  {"EEG C3-REF", "EEG CZ-REF"},  {"EEG CZ-REF", "EEG C4-REF"},
            {"EEG C4-REF", "EEG T4-REF"},  {"EEG T4-REF", "EEG A2-REF"},  {"EEG FP1-REF", "EEG F3-REF"},
            {"EEG F3-REF", "EEG C3-REF"},  {"EEG C3-REF", "EEG P3-REF"},  {"EEG P3-REF", "EEG O1-REF"},
            {"EEG FP2-REF", "EEG F4-REF"}, {"EEG F4-REF", "EEG C4-REF"},  {"EEG C4-REF", "EEG P4-REF"},
            {"EEG P4-REF", "EEG O2-REF"},
        };
        for (const auto& row : rows) m.pairs.emplace_back(row[0], row[1]);
        return m;
    }();
    return spec;
}

Recording apply_montage(const Recording& r, const MontageSpec& m) {
    validate_recording(r);
    Recording out;
    out.fs = r.fs;
    if (m.common_average) {
        out.channel_names = r.channel_names;
        out.samples = r.samples;
        const Eigen::RowVectorXf mean = r.samples.colwise().mean();
        out.samples.rowwise() -= mean;
        return out;
    }
    std::unordered_map<std::string, Eigen::Index> index;
    for (Eigen::Index i = 0; i < r.channels(); ++i) index.emplace(r.channel_names[i], i);
    out.samples.resize(static_cast<Eigen::Index>(m.pairs.size()), r.length());
    out.channel_names.reserve(m.pairs.size());
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
        const auto& [anode, cathode] = m.pairs[i];
        const auto ai = index.find(anode);
        const auto ci = index.find(cathode);
        if (ai == index.end()) {
            throw MontageError("montage '" + m.name + "': no channel named '" + anode + "'");
        }
        if (ci == index.end()) {
            throw MontageError("montage '" + m.name + "': no channel named '" + cathode + "'");
        }
        out.samples.row(static_cast<Eigen::Index>(i)) = r.samples.row(ai->second) - r.samples.row(ci->second);
        out.channel_names.push_back(anode + "-" + cathode);
    }
    return out;
}

}  // namespace ndl
