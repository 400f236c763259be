#pragma once

#include <string>

#include "trojanscope/model.hpp"

namespace trojanscope::nn {

// Model-on-disk format version written by save_model.
inline constexpr int kModelFormatVersion = 1;

// Writes `dir/manifest` (key=value text: format_version, arch_id,
// class_count, input_shape, layer list, per-tensor byte offsets/lengths,
// seed, training metadata) and `dir/weights.bin` (little-endian float32,
// row-major, concatenated in layer order, weight before bias).
void save_model(const Model& m, const std::string& dir);

// Round-trip identity: load(save(m)) has bit-identical weights and
// metadata. Malformed files raise FormatError with a byte offset; an
// unsupported format_version raises FormatError naming the version.
Model load_model(const std::string& dir);

}  // namespace trojanscope::nn
