#pragma once

// Binary container for descriptor maps. Layout: the 4-byte magic "LDG1",
// two little-endian u32 node counts (n1, n2), then one row-major block of
// five little-endian f64 per node (forward, backward, tau_f, tau_b, flags),
// u varying fastest. Off-shell nodes store NaN in every field. A JSON
// sidecar at <path>.json carries the slice, energy, descriptor settings and
// model identity; reading requires it.

#include <string>

#include "nhim/ld.hpp"

namespace nhim {

/// Writes the grid and its sidecar. Re-writing a freshly read grid
/// reproduces both files byte for byte.
void write_grid(const std::string& path, const LdGrid& g);

/// Reads a grid written by write_grid. Malformed files, truncated payloads
/// and missing sidecars raise ConfigError.
LdGrid read_grid(const std::string& path);

}  // namespace nhim
