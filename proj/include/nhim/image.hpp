#pragma once

// Renders descriptor maps to binary PPM (P6). Values are normalized between
// robust quantiles of the on-shell population and mapped through a
// perceptually uniform 256-entry color table; off-shell nodes paint light
// gray. Image rows run top-down from the window's upper edge.

#include <array>
#include <cstdint>
#include <string>

#include "nhim/ld.hpp"

namespace nhim {

struct ImageOptions {
  double quantile_lo = 0.01;
  double quantile_hi = 0.99;
  bool mark_escaped = false;  ///< paint escape-flagged nodes dark red
};

const std::array<std::array<std::uint8_t, 3>, 256>& color_table();

void write_ppm(const std::string& path, const LdGrid& g,
               const ImageOptions& opt = {});

}  // namespace nhim
