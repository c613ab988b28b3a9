#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gundet/detector.hpp"

namespace gundet {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

/// Metrics whose denominator can vanish are reported as absent rather than 0.
struct ClassificationMetrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0)..(1,1)
  double auc = 0.0;
};

struct ApResult {
  double ap = 0.0;
  int64_t matched = 0;    // true positives over the full sweep
  int64_t total_gt = 0;   // includes ground truth of excluded units
  double iou_threshold = 0.5;
  std::vector<std::pair<double, double>> pr_points;  // (recall, precision)
};

/// Positive class is Gun = 1.
ConfusionCounts confusion_counts(const std::vector<int>& predicted,
                                 const std::vector<int>& actual);

ClassificationMetrics classification_metrics(const ConfusionCounts& c);

/// Threshold sweep over distinct scores (ties grouped), AUC by trapezoid.
RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& labels);

/// Detections/ground truth grouped by evaluation unit (video, or video#frame
/// when frame-level boxes exist). Detections are pooled and matched greedily
/// (best IoU, each GT at most once, never across units). Units in
/// `excluded_units` keep their GT boxes in the recall denominator but those
/// boxes cannot be matched: that is how stage-1 false negatives propagate.
ApResult average_precision(
    const std::map<std::string, std::vector<BoundingBox>>& detections,
    const std::map<std::string, std::vector<BoundingBox>>& ground_truth,
    double iou_threshold = 0.5,
    const std::set<std::string>& excluded_units = {},
    bool eleven_point_interpolation = false);

}  // namespace gundet
