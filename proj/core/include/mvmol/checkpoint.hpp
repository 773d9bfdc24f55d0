#pragma once

#include <string>

#include "mvmol/model.hpp"

namespace mvmol {

/// Binary checkpoint layout:
///   magic "MVML1\n"
///   u32 config length, config text (flat key=value, the model config)
///   per tensor: u32 name length, name, u32 ndim, u32 dims..., f32 payload
/// All integers and floats little-endian. Tensors appear in named_params
/// order, which is fixed by construction, so save -> load -> save is
/// byte-identical.
inline constexpr char kCheckpointMagic[] = "MVML1\n";

void save_checkpoint(Model& model, const std::string& path);

/// Rebuilds the model from the embedded config and fills every named tensor.
/// A tensor name that does not exist in the rebuilt model, a missing tensor,
/// or a shape mismatch is an error.
Model load_checkpoint(const std::string& path);

}  // namespace mvmol
