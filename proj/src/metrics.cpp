#include "gundet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gundet/errors.hpp"

namespace gundet {

ConfusionCounts confusion_counts(const std::vector<int>& predicted,
                                 const std::vector<int>& actual) {
  if (predicted.size() != actual.size())
    throw ValidationError("confusion_counts: length mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) ||
        (actual[i] != 0 && actual[i] != 1))
      throw ValidationError("confusion_counts: labels must be binary");
    if (actual[i] == 1)
      predicted[i] == 1 ? ++c.tp : ++c.fn;
    else
      predicted[i] == 1 ? ++c.fp : ++c.tn;
  }
  return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
    throw ValidationError("confusion counts must be non-negative");
  if (c.total() == 0)
    throw ValidationError("classification_metrics: all-zero counts");
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0)
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0)
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  return m;
}

RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValidationError("roc_auc: length mismatch");
  int64_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("roc_auc: labels must be binary");
    l == 1 ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0)
    throw ValidationError("roc_auc: needs at least one positive and one negative");

  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.emplace_back(0.0, 0.0);
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // all samples sharing one score move together (ties grouped)
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      labels[order[i]] == 1 ? ++tp : ++fp;
      ++i;
    }
    curve.points.emplace_back(static_cast<double>(fp) / neg,
                              static_cast<double>(tp) / pos);
  }

  double auc = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const auto& [x0, y0] = curve.points[k - 1];
    const auto& [x1, y1] = curve.points[k];
    auc += (x1 - x0) * (y0 + y1) / 2.0;
  }
  curve.auc = auc;
  return curve;
}

ApResult average_precision(
    const std::map<std::string, std::vector<BoundingBox>>& detections,
    const std::map<std::string, std::vector<BoundingBox>>& ground_truth,
    double iou_threshold, const std::set<std::string>& excluded_units,
    bool eleven_point_interpolation) {
  if (iou_threshold < 0.0 || iou_threshold > 1.0)
    throw ValidationError("average_precision: iou threshold must lie in [0,1]");
  for (const auto& [unit, _] : detections)
    if (!ground_truth.count(unit))
      throw ValidationError("average_precision: detections for unknown unit " + unit);
  for (const auto& unit : excluded_units)
    if (!ground_truth.count(unit))
      throw ValidationError("average_precision: excluded unit unknown: " + unit);

  ApResult result;
  result.iou_threshold = iou_threshold;
  for (const auto& [unit, boxes] : ground_truth)
    result.total_gt += static_cast<int64_t>(boxes.size());
  if (result.total_gt == 0)
    throw ValidationError("average_precision: no ground-truth boxes");

  struct Det {
    const std::string* unit;
    const BoundingBox* box;
  };
  std::vector<Det> pool;
  for (const auto& [unit, boxes] : detections)
    for (const auto& b : boxes) pool.push_back({&unit, &b});
  std::sort(pool.begin(), pool.end(), [](const Det& a, const Det& b) {
    if (a.box->confidence != b.box->confidence)
      return a.box->confidence > b.box->confidence;
    if (*a.unit != *b.unit) return *a.unit < *b.unit;
    if (a.box->x != b.box->x) return a.box->x < b.box->x;
    return a.box->y < b.box->y;
  });

  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [unit, boxes] : ground_truth)
    matched[unit].assign(boxes.size(), false);

  int64_t tp = 0, fp = 0;
  std::vector<std::pair<double, double>> pr;  // (recall, precision) per rank
  pr.reserve(pool.size());
  for (const auto& det : pool) {
    bool hit = false;
    if (!excluded_units.count(*det.unit)) {
      const auto& gts = ground_truth.at(*det.unit);
      auto& used = matched.at(*det.unit);
      double best_iou = 0.0;
      int best = -1;
      for (size_t g = 0; g < gts.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(*det.box, gts[g]);
        if (v >= iou_threshold && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[static_cast<size_t>(best)] = true;
        hit = true;
      }
    }
    hit ? ++tp : ++fp;
    pr.emplace_back(static_cast<double>(tp) / result.total_gt,
                    static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  result.matched = tp;
  result.pr_points = pr;

  // precision envelope: best precision at any recall >= r
  auto envelope = [&](double recall) {
    double best = 0.0;
    for (const auto& [r, p] : pr)
      if (r >= recall) best = std::max(best, p);
    return best;
  };

  double ap = 0.0;
  if (eleven_point_interpolation) {
    for (int k = 0; k <= 10; ++k) ap += envelope(k / 10.0) / 11.0;
  } else {
    double prev_recall = 0.0;
    for (const auto& [r, p] : pr) {
      if (r > prev_recall) {
        ap += (r - prev_recall) * envelope(r);
        prev_recall = r;
      }
    }
  }
  result.ap = ap;
  return result;
}

}  // namespace gundet
