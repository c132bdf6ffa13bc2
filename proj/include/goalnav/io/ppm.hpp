#pragma once

#include <string>
#include <vector>

#include "goalnav/world/render.hpp"

namespace goalnav::io {

/// Binary P6, 8 bits per channel. `comment` becomes a "# ..." header line.
void write_ppm(const std::string& path, const world::RGBImage& image, const std::string& comment = "");
world::RGBImage read_ppm(const std::string& path);

/// Images side by side, top-aligned, black padding.
world::RGBImage tile_horizontal(const std::vector<world::RGBImage>& images);

}  // namespace goalnav::io
