#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fsed {

struct Interval {
    double start = 0;
    double end = 0;
};

/// Intersection over union of two time intervals, in [0, 1].
double iou(const Interval& a, const Interval& b);

/// Drops predictions with any positive-length overlap with an UNK interval;
/// they count as neither TP nor FP. Endpoint touching keeps the prediction.
std::vector<Interval> remove_unk(const std::vector<Interval>& preds,
                                 const std::vector<Interval>& unk);

struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (prediction idx, gt idx)
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

/// Maximum-cardinality bipartite matching over pairs with iou >= min_iou;
/// among maximum-cardinality matchings the one with the greatest total IoU is
/// returned (deterministic tie-breaking). Predictions must already have UNK
/// overlaps removed.
MatchResult match_events(const std::vector<Interval>& preds,
                         const std::vector<Interval>& gts,
                         double min_iou = 0.3);

struct Metrics {
    double precision = 0;
    double recall = 0;
    double fscore = 0;
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn), fscore = 2PR/(P+R);
/// zero whenever the denominator is zero.
Metrics compute_metrics(long tp, long fp, long fn);

struct FileScore {
    MatchResult match;
    Metrics metrics;
    int n_preds = 0;  // after UNK removal
    int n_gts = 0;
};

struct ScoreReport {
    std::map<std::string, FileScore> per_file;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    Metrics pooled;

    nlohmann::json to_json() const;
};

/// Scores a prediction CSV against a DCASE ground-truth CSV: per-recording
/// IoU matching after UNK removal, pooled metrics from summed counts.
/// A recording present in the predictions but absent from the ground truth is
/// an error naming it.
ScoreReport score_file(const std::string& pred_csv_text,
                       const std::string& gt_csv_text, double min_iou = 0.3);

}  // namespace fsed
