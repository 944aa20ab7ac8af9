#pragma once

#include <cstdint>

#include "caplab/image.hpp"

namespace caplab {

// Procedural "natural-looking" RGB scene: a graded backdrop, soft-edged
// textured objects, multi-octave value-noise texture and a smooth
// illumination field with deep shadows. Deterministic in seed.
Image procedural_scene(int height, int width, std::uint64_t seed);

}  // namespace caplab
