#pragma once

#include "tdr/grid.hpp"

#include <string>

namespace tdr {

// 8-bit RGB heatmap, one pixel block per node, y increasing upwards. Values
// are clipped to [lo, hi].
void write_heatmap_png(const std::string& path, const ScalarField& f, double lo, double hi, int scale = 4);

} // namespace tdr
