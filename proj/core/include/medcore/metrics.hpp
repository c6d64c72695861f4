#pragma once

#include <utility>
#include <vector>

#include "medcore/model.hpp"
#include "medcore/synthdata.hpp"

namespace medcore {

struct DiceIou {
  double dice = 0;
  double iou = 0;
};

/// Both masks empty counts as a perfect match.
DiceIou dice_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Boundary F1: contour pixels matched within Euclidean distance `tol`.
/// Both contours empty gives 1; exactly one empty gives 0.
double bf1(const BinaryMask& pred, const BinaryMask& gt, double tol = 2.0);

struct Hd95 {
  double value = 0;
  bool degenerate = false;  ///< an input was empty; value is the image diagonal
};

/// 95th percentile of the pooled nearest contour-to-contour distances in both directions.
Hd95 hd95(const BinaryMask& pred, const BinaryMask& gt);

struct SampleMetrics {
  double dice = 0, iou = 0, bf1 = 0, hd95 = 0;
  bool hd95_degenerate = false;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  double dice = 0, iou = 0, bf1 = 0, hd95 = 0;  ///< macro averages in sample order
  int degenerate = 0;
};

SampleMetrics evaluate_pair(const BinaryMask& pred, const BinaryMask& gt, double tol = 2.0);
MetricReport summarize(std::vector<SampleMetrics> samples);

/// Thresholds the model's logits at 0 and scores every sample.
MetricReport evaluate_model(const Model& model, const std::vector<Sample>& samples, const GroupMask& mask = {},
                            double tol = 2.0);

}  // namespace medcore
