#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ndl/recording.hpp"

namespace ndl {

// Re-referencing spec: either an explicit anode/cathode pair list or the
// common-average tag.
struct MontageSpec {
    std::string name;
    std::vector<std::pair<std::string, std::string>> pairs;  // (anode, cathode)
    bool common_average = false;
};

// Parse a key-value montage file:
//   name = tcp
//   pair = EEG FP1-REF,EEG F7-REF
//   ...
// or `common_average = true` instead of pair lines.
MontageSpec load_montage(const std::string& path);
MontageSpec parse_montage(const std::string& text);

// The 22-pair ACNS temporal central parasagittal montage.
const MontageSpec& tcp_montage();

// Pair montage: output channel i = anode_i - cathode_i, named "ANODE-CATHODE".
// Common average: each channel minus the per-time-point mean over channels.
Recording apply_montage(const Recording& r, const MontageSpec& m);

}  // namespace ndl
