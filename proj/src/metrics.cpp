#include "pigseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace pigseg {

double MatchResult::iou_sum() const {
  double sum = 0.0;
  for (const TpPair& pair : tp_pairs) sum += pair.iou;
  return sum;
}

MatchResult match_segments(const LabelImage& pred, const LabelImage& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw std::invalid_argument("prediction and ground truth dimensions differ");

  std::map<int, std::size_t> pred_area;
  std::map<int, std::size_t> gt_area;
  std::map<std::pair<int, int>, std::size_t> intersection;
  const std::size_t n = pred.pixels().size();
  for (std::size_t i = 0; i < n; ++i) {
    const int p = pred.pixels()[i];
    const int g = gt.pixels()[i];
    if (p != 0) ++pred_area[p];
    if (g != 0) ++gt_area[g];
    if (p != 0 && g != 0) ++intersection[{p, g}];
  }

  MatchResult result;
  std::set<int> matched_pred;
  std::set<int> matched_gt;
  for (const auto& [pair, inter] : intersection) {
    const auto [p, g] = pair;
    const std::size_t uni = pred_area[p] + gt_area[g] - inter;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    if (iou > 0.5) {
      // Segments partition the image, so double matches cannot happen.
      if (!matched_pred.insert(p).second || !matched_gt.insert(g).second)
        throw std::logic_error("segment matched twice despite pixel partition");
      result.tp_pairs.push_back({p, g, iou});
    }
  }
  std::sort(result.tp_pairs.begin(), result.tp_pairs.end(), [](const TpPair& a, const TpPair& b) {
    return a.gt_id != b.gt_id ? a.gt_id < b.gt_id : a.pred_id < b.pred_id;
  });
  for (const auto& [id, area] : pred_area)
    if (!matched_pred.count(id)) result.fp_ids.push_back(id);
  for (const auto& [id, area] : gt_area)
    if (!matched_gt.count(id)) result.fn_ids.push_back(id);
  return result;
}

std::optional<double> panoptic_quality(const MatchResult& m) {
  const double denom = m.tp() + 0.5 * m.fp() + 0.5 * m.fn();
  if (denom <= 0.0) return std::nullopt;
  return m.iou_sum() / denom;
}

DetectionScores detection_scores(const MatchResult& m) {
  DetectionScores scores;
  if (m.tp() + m.fp() > 0)
    scores.precision = static_cast<double>(m.tp()) / (m.tp() + m.fp());
  if (m.tp() + m.fn() > 0)
    scores.recall = static_cast<double>(m.tp()) / (m.tp() + m.fn());
  if (m.tp() + m.fp() + m.fn() > 0)
    scores.f1 = 2.0 * m.tp() / (2.0 * m.tp() + m.fp() + m.fn());
  return scores;
}

std::optional<double> jaccard_accuracy(const LabelImage& pred, const LabelImage& gt,
                                       bool include_background) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw std::invalid_argument("prediction and ground truth dimensions differ");
  if (pred.kind() != gt.kind())
    throw std::invalid_argument("prediction and ground truth kinds differ");

  if (pred.kind() == LabelKind::binary) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.pixels().size(); ++i) {
      const bool p = pred.pixels()[i] != 0;
      const bool g = gt.pixels()[i] != 0;
      if (p && g) ++inter;
      if (p || g) ++uni;
    }
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(uni);
  }

  const int max_class = std::max(pred.max_label(), gt.max_label());
  const int first = include_background ? 0 : 1;
  double sum = 0.0;
  int counted = 0;
  for (int cls = first; cls <= max_class; ++cls) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.pixels().size(); ++i) {
      const bool p = pred.pixels()[i] == cls;
      const bool g = gt.pixels()[i] == cls;
      if (p && g) ++inter;
      if (p || g) ++uni;
    }
    if (uni == 0) continue;  // class absent on both sides
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return sum / counted;
}

std::optional<double> orientation_accuracy(const std::vector<Ellipse>& pred,
                                           const std::vector<Ellipse>& gt,
                                           const MatchResult& m) {
  if (m.tp() == 0) return std::nullopt;
  int correct = 0;
  for (const TpPair& pair : m.tp_pairs) {
    const Ellipse& pe = pred.at(pair.pred_id);
    const Ellipse& ge = gt.at(pair.gt_id);
    if (pe.head_sign == HeadSign::unknown || ge.head_sign == HeadSign::unknown)
      throw std::invalid_argument("orientation_accuracy requires known head_sign on all TP pairs");
    const double diff = std::remainder(directed_angle(pe) - directed_angle(ge), 2.0 * M_PI);
    if (std::abs(diff) < M_PI / 2.0) ++correct;
  }
  return static_cast<double>(correct) / m.tp();
}

MatchResult ellipse_match(const std::vector<Ellipse>& pred, const std::vector<Ellipse>& gt,
                          const GridSpec& grid) {
  struct Candidate {
    double iou;
    int gt_id;
    int pred_id;
  };
  std::vector<Candidate> candidates;
  for (int g = 0; g < static_cast<int>(gt.size()); ++g) {
    for (int p = 0; p < static_cast<int>(pred.size()); ++p) {
      double iou = 0.0;
      try {
        iou = ellipse_iou(pred[p], gt[g], grid);
      } catch (const std::invalid_argument&) {
        continue;  // both rasters empty on this grid
      }
      if (iou > 0.5) candidates.push_back({iou, g, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
    return a.pred_id < b.pred_id;
  });

  MatchResult result;
  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> gt_used(gt.size(), false);
  for (const Candidate& c : candidates) {
    if (pred_used[c.pred_id] || gt_used[c.gt_id]) continue;
    pred_used[c.pred_id] = true;
    gt_used[c.gt_id] = true;
    result.tp_pairs.push_back({c.pred_id, c.gt_id, c.iou});
  }
  std::sort(result.tp_pairs.begin(), result.tp_pairs.end(), [](const TpPair& a, const TpPair& b) {
    return a.gt_id != b.gt_id ? a.gt_id < b.gt_id : a.pred_id < b.pred_id;
  });
  for (int p = 0; p < static_cast<int>(pred.size()); ++p)
    if (!pred_used[p]) result.fp_ids.push_back(p);
  for (int g = 0; g < static_cast<int>(gt.size()); ++g)
    if (!gt_used[g]) result.fn_ids.push_back(g);
  return result;
}

void EvalStats::add(const EvalStats& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  iou_sum += other.iou_sum;
  jaccard_intersection += other.jaccard_intersection;
  jaccard_union += other.jaccard_union;
  has_jaccard = has_jaccard || other.has_jaccard;
  orientation_correct += other.orientation_correct;
  orientation_total += other.orientation_total;
}

EvalReport report_from_stats(const EvalStats& stats) {
  EvalReport report;
  report.tp = stats.tp;
  report.fp = stats.fp;
  report.fn = stats.fn;
  report.iou_sum = stats.iou_sum;
  MatchResult synth;
  synth.tp_pairs.resize(stats.tp);
  synth.fp_ids.resize(stats.fp);
  synth.fn_ids.resize(stats.fn);
  const double denom = stats.tp + 0.5 * stats.fp + 0.5 * stats.fn;
  if (denom > 0.0) report.pq = stats.iou_sum / denom;
  const DetectionScores scores = detection_scores(synth);
  report.precision = scores.precision;
  report.recall = scores.recall;
  report.f1 = scores.f1;
  if (stats.has_jaccard && stats.jaccard_union > 0.0)
    report.jaccard = stats.jaccard_intersection / stats.jaccard_union;
  if (stats.orientation_total > 0)
    report.orientation = static_cast<double>(stats.orientation_correct) / stats.orientation_total;
  return report;
}

EvalReport macro_aggregate(const std::vector<EvalReport>& reports) {
  EvalReport out;
  auto mean_of = [&](auto getter) -> std::optional<double> {
    double sum = 0.0;
    int count = 0;
    for (const EvalReport& r : reports) {
      if (const auto v = getter(r)) {
        sum += *v;
        ++count;
      }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
  };
  out.pq = mean_of([](const EvalReport& r) { return r.pq; });
  out.f1 = mean_of([](const EvalReport& r) { return r.f1; });
  out.precision = mean_of([](const EvalReport& r) { return r.precision; });
  out.recall = mean_of([](const EvalReport& r) { return r.recall; });
  out.jaccard = mean_of([](const EvalReport& r) { return r.jaccard; });
  out.orientation = mean_of([](const EvalReport& r) { return r.orientation; });
  for (const EvalReport& r : reports) {
    out.tp += r.tp;
    out.fp += r.fp;
    out.fn += r.fn;
    out.iou_sum += r.iou_sum;
  }
  return out;
}

nlohmann::json report_to_json(const EvalReport& report) {
  auto field = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return nlohmann::json{{"pq", field(report.pq)},
                        {"f1", field(report.f1)},
                        {"precision", field(report.precision)},
                        {"recall", field(report.recall)},
                        {"jaccard_accuracy", field(report.jaccard)},
                        {"orientation_accuracy", field(report.orientation)},
                        {"tp", report.tp},
                        {"fp", report.fp},
                        {"fn", report.fn},
                        {"iou_sum", report.iou_sum}};
}

}  // namespace pigseg
