#pragma once

#include <string>

#include "capgen/params.hpp"

namespace capgen {

// Flat binary tensor file: magic + length-prefixed JSON header listing
// (name, shape, offset) + little-endian f64 payload. Shared by encoder and
// decoder checkpoints and by embedding tables.
void save_tensors(const std::string& path, const ParamMap& params);

// Loads into pre-shaped tensors; every entry must exist with an identical
// shape, otherwise the error names expected vs found.
void load_tensors(const std::string& path, ParamMap& params);

// Loads every tensor in the file as-is.
ParamMap load_all_tensors(const std::string& path);

}  // namespace capgen
