#pragma once

#include "im2mesh/types.hpp"

namespace im2mesh {

/// Bilinear resample to (h, w).
Image resize_image(const Image& img, int h, int w);

/// 2x box downsample (even dimensions).
Image downsample2x(const Image& img);

/// rgb' = rgb * alpha (composite over black). rgb is HxWx3, alpha HxWx1.
Image composite_over_black(const Image& rgb, const Image& alpha);

}  // namespace im2mesh
