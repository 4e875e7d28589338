#pragma once

#include <string>

#include "accnn/params.hpp"

namespace accnn {

/// Binary checkpoint of named float32 arrays.
///
/// Layout: magic "ACCNN1", then u64 array count, then per array: u64 name
/// byte length, UTF-8 name bytes, u64 rank, rank x u64 extents, and the raw
/// float32 values. All integers and floats are little-endian. Arrays are
/// written in store order and read back in file order, so save -> load ->
/// save reproduces the bytes exactly.
void save_checkpoint(const std::string& path, const ParamStore<float>& store);

/// Reads a checkpoint into a fresh store (tensors carry no grad buffers).
ParamStore<float> load_checkpoint(const std::string& path);

/// Copies checkpoint values into an existing model store. Every name must
/// match in both directions and every shape must agree; otherwise throws
/// with a per-tensor diff naming what is missing, unexpected, or reshaped.
void assign_from_checkpoint(ParamStore<float>& model, const ParamStore<float>& loaded);

}  // namespace accnn
