#pragma once

#include <optional>
#include <vector>

#include "pigseg/geometry.hpp"
#include "pigseg/image.hpp"

namespace pigseg {

struct TpPair {
  int pred_id = 0;
  int gt_id = 0;
  double iou = 0.0;
};

/// Segment matching under the strict IoU > 0.5 rule.
struct MatchResult {
  std::vector<TpPair> tp_pairs;  // sorted by (gt_id, pred_id)
  std::vector<int> fp_ids;       // unmatched predicted segments
  std::vector<int> fn_ids;       // unmatched ground-truth segments

  int tp() const { return static_cast<int>(tp_pairs.size()); }
  int fp() const { return static_cast<int>(fp_ids.size()); }
  int fn() const { return static_cast<int>(fn_ids.size()); }
  double iou_sum() const;
};

/// Pixel-level matching of two instance label images. Segments are the
/// nonzero labels; because segments partition the pixels, at most one
/// predicted segment can exceed IoU 0.5 per ground-truth segment (checked,
/// not resolved by tie-breaking).
MatchResult match_segments(const LabelImage& pred, const LabelImage& gt);

/// Matched-IoU sum over |TP| + |FP|/2 + |FN|/2. Empty inputs on both
/// sides have no defined value.
std::optional<double> panoptic_quality(const MatchResult& m);

struct DetectionScores {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

DetectionScores detection_scores(const MatchResult& m);

/// Binary images: foreground intersection over union. Categorical images:
/// mean of per-class Jaccard over non-background classes (optionally
/// including background); classes with an empty union are skipped.
std::optional<double> jaccard_accuracy(const LabelImage& pred, const LabelImage& gt,
                                       bool include_background = false);

/// Fraction of matched pairs whose directed orientations agree to within
/// 90 degrees. Both sides of every TP pair must have a known head_sign.
/// tp ids index into the ellipse lists.
std::optional<double> orientation_accuracy(const std::vector<Ellipse>& pred,
                                           const std::vector<Ellipse>& gt, const MatchResult& m);

/// Raster-IoU matching of two ellipse lists on a shared grid. Ellipse
/// rasters may overlap, so pairs above 0.5 are matched greedily in
/// decreasing IoU order, each ellipse used at most once. Ids are indices
/// into the lists.
MatchResult ellipse_match(const std::vector<Ellipse>& pred, const std::vector<Ellipse>& gt,
                          const GridSpec& grid);

enum class AveragingMode {
  micro,           // pool TP/FP/FN and IoU sums across images
  per_image_macro, // average per-image metric values
};

struct EvalReport {
  std::optional<double> pq;
  std::optional<double> f1;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> jaccard;
  std::optional<double> orientation;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double iou_sum = 0.0;
};

/// Per-image accumulator used for micro-averaged aggregation.
struct EvalStats {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double iou_sum = 0.0;
  double jaccard_intersection = 0.0;
  double jaccard_union = 0.0;
  bool has_jaccard = false;
  int orientation_correct = 0;
  int orientation_total = 0;

  void add(const EvalStats& other);
};

EvalReport report_from_stats(const EvalStats& stats);

/// Macro aggregate: metric-wise mean over per-image reports (images where
/// a metric is not applicable are skipped for that metric); counts are
/// summed.
EvalReport macro_aggregate(const std::vector<EvalReport>& reports);

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace pigseg
