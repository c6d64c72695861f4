#include "medcore/morphology.hpp"

#include "medcore/error.hpp"

namespace medcore {
namespace {

BinaryMask step(const BinaryMask& m, bool dilate) {
  BinaryMask out(m.height(), m.width());
  constexpr int dy[] = {0, -1, 1, 0, 0};
  constexpr int dx[] = {0, 0, 0, -1, 1};
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool v = !dilate;
      for (int k = 0; k < 5; ++k) {
        const bool n = m.get(y + dy[k], x + dx[k]);
        if (dilate && n) v = true;
        if (!dilate && !n) v = false;
      }
      out.set(y, x, v);
    }
  }
  return out;
}

}  // namespace

BinaryMask dilate4(const BinaryMask& mask, int steps) {
  BinaryMask out = mask;
  for (int i = 0; i < steps; ++i) out = step(out, true);
  return out;
}

BinaryMask erode4(const BinaryMask& mask, int steps) {
  BinaryMask out = mask;
  for (int i = 0; i < steps; ++i) out = step(out, false);
  return out;
}

BinaryMask boundary_map(const BinaryMask& mask, int width) {
  if (width < 1) throw ArgumentError("boundary_map: width must be >= 1, got " + std::to_string(width));
  const BinaryMask d = dilate4(mask, width);
  const BinaryMask e = erode4(mask, width);
  BinaryMask out(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) out.set(y, x, d.at(y, x) && !e.at(y, x));
  return out;
}

BinaryMask contour_pixels(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = !mask.get(y - 1, x) || !mask.get(y + 1, x) || !mask.get(y, x - 1) || !mask.get(y, x + 1);
      out.set(y, x, edge);
    }
  }
  return out;
}

}  // namespace medcore
