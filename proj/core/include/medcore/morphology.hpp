#pragma once

#include "medcore/synthdata.hpp"

namespace medcore {

/// 4-connected dilation / erosion applied `steps` times. Pixels outside the
/// image count as background, so erosion strips the image frame.
BinaryMask dilate4(const BinaryMask& mask, int steps);
BinaryMask erode4(const BinaryMask& mask, int steps);

/// Boundary band: dilate(mask, w) minus erode(mask, w). Empty mask gives an empty band.
BinaryMask boundary_map(const BinaryMask& mask, int width);

/// Foreground pixels with at least one 4-neighbour that is background or off-image.
BinaryMask contour_pixels(const BinaryMask& mask);

}  // namespace medcore
