#pragma once

#include <string>

#include "ndl/model.hpp"

namespace ndl {

// Two-file model container: a key-value metadata sidecar at `path` and a
// binary tensor blob at `path + ".bin"` (per tensor: u16-LE name length,
// name, u8 rank, u32-LE dims, f32-LE row-major data). Tensors round-trip
// bitwise.
void save_model(const NdlParams& params, const std::string& path);
NdlParams load_model(const std::string& path);

}  // namespace ndl
