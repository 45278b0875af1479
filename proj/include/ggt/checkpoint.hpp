#pragma once

#include <string>

#include "ggt/unet.hpp"

namespace ggt {

/// "GGT1" checkpoint: magic, a manifest of (name, shape, byte offset) per
/// entry, then little-endian float32 blobs. Save/load round-trips bitwise.
void save_checkpoint(const UNetModel<float>& model, const std::string& path);
UNetModel<float> load_checkpoint(const std::string& path);

}  // namespace ggt
