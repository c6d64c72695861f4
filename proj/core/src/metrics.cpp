#include "medcore/metrics.hpp"

#include <cmath>
#include <limits>

#include "medcore/error.hpp"
#include "medcore/morphology.hpp"
#include "medcore/stats.hpp"

namespace medcore {
namespace {

using Points = std::vector<std::pair<int, int>>;

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(op) + ": mask dims " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

Points contour_points(const BinaryMask& mask) {
  const BinaryMask c = contour_pixels(mask);
  Points pts;
  for (int y = 0; y < c.height(); ++y)
    for (int x = 0; x < c.width(); ++x)
      if (c.at(y, x)) pts.emplace_back(y, x);
  return pts;
}

// Squared distance to the nearest point of `to`; brute force is fine at these sizes.
std::vector<double> nearest_sq(const Points& from, const Points& to) {
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto& [y, x] : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto& [v, u] : to) {
      const long d = static_cast<long>(y - v) * (y - v) + static_cast<long>(x - u) * (x - u);
      if (d < best) best = d;
    }
    out.push_back(static_cast<double>(best));
  }
  return out;
}

}  // namespace

DiceIou dice_iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "dice_iou");
  std::int64_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
    inter += p && g;
    a += p;
    b += g;
  }
  if (a + b == 0) return {1.0, 1.0};
  return {2.0 * static_cast<double>(inter) / static_cast<double>(a + b),
          static_cast<double>(inter) / static_cast<double>(a + b - inter)};
}

double bf1(const BinaryMask& pred, const BinaryMask& gt, double tol) {
  require_same_dims(pred, gt, "bf1");
  if (!(tol >= 0.0)) throw ArgumentError("bf1: tolerance must be >= 0");
  const Points p = contour_points(pred), g = contour_points(gt);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  const double tol2 = tol * tol;
  auto matched = [tol2](const std::vector<double>& d) {
    double n = 0;
    for (double v : d) n += v <= tol2;
    return n / static_cast<double>(d.size());
  };
  const double precision = matched(nearest_sq(p, g));
  const double recall = matched(nearest_sq(g, p));
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Hd95 hd95(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt, "hd95");
  if (pred.empty() || gt.empty()) {
    return {std::hypot(static_cast<double>(gt.height()), static_cast<double>(gt.width())), true};
  }
  const Points p = contour_points(pred), g = contour_points(gt);
  std::vector<double> d = nearest_sq(p, g);
  const std::vector<double> back = nearest_sq(g, p);
  d.insert(d.end(), back.begin(), back.end());
  for (auto& v : d) v = std::sqrt(v);
  return {percentile(std::move(d), 95.0), false};
}

SampleMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, double tol) {
  SampleMetrics m;
  const DiceIou di = dice_iou(pred, gt);
  m.dice = di.dice;
  m.iou = di.iou;
  m.bf1 = bf1(pred, gt, tol);
  const Hd95 h = hd95(pred, gt);
  m.hd95 = h.value;
  m.hd95_degenerate = h.degenerate;
  return m;
}

MetricReport summarize(std::vector<SampleMetrics> samples) {
  MetricReport r;
  r.samples = std::move(samples);
  if (r.samples.empty()) return r;
  for (const auto& s : r.samples) {
    r.dice += s.dice;
    r.iou += s.iou;
    r.bf1 += s.bf1;
    r.hd95 += s.hd95;
    r.degenerate += s.hd95_degenerate;
  }
  const double n = static_cast<double>(r.samples.size());
  r.dice /= n;
  r.iou /= n;
  r.bf1 /= n;
  r.hd95 /= n;
  return r;
}

MetricReport evaluate_model(const Model& model, const std::vector<Sample>& samples, const GroupMask& mask,
                            double tol) {
  std::vector<SampleMetrics> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const Tensor logits = predict_logits(model.params, model.config, model.catalog, mask, s.image, s.box);
    out.push_back(evaluate_pair(BinaryMask::from_logits(logits), s.mask, tol));
  }
  return summarize(std::move(out));
}

}  // namespace medcore
