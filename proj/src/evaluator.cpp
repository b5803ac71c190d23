#include "fsed/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "fsed/corpus.hpp"
#include "fsed/errors.hpp"

namespace fsed {

namespace {

// Unit-capacity min-cost max-flow (successive shortest paths with Dijkstra
// and potentials). With edge cost 1 - iou, the maximum flow of minimum cost
// is the maximum-cardinality matching with the greatest total IoU.
class MatchingSolver {
public:
    MatchingSolver(int n) : graph_(n) {}

    void add_edge(int u, int v, double cost) {
        graph_[u].push_back({v, 1, cost, static_cast<int>(graph_[v].size())});
        graph_[v].push_back({u, 0, -cost, static_cast<int>(graph_[u].size()) - 1});
    }

    int run(int source, int sink) {
        const int n = static_cast<int>(graph_.size());
        std::vector<double> potential(n, 0.0);
        int flow = 0;
        for (;;) {
            std::vector<double> dist(n, std::numeric_limits<double>::infinity());
            std::vector<int> prev_node(n, -1), prev_edge(n, -1);
            std::vector<bool> done(n, false);
            dist[source] = 0;
            for (;;) {
                int u = -1;
                for (int i = 0; i < n; ++i)
                    if (!done[i] && dist[i] < std::numeric_limits<double>::infinity() &&
                        (u == -1 || dist[i] < dist[u]))
                        u = i;
                if (u == -1) break;
                done[u] = true;
                for (std::size_t e = 0; e < graph_[u].size(); ++e) {
                    const Edge& edge = graph_[u][e];
                    if (edge.cap <= 0) continue;
                    const double nd = dist[u] + edge.cost + potential[u] - potential[edge.to];
                    if (nd < dist[edge.to] - 1e-15) {
                        dist[edge.to] = nd;
                        prev_node[edge.to] = u;
                        prev_edge[edge.to] = static_cast<int>(e);
                    }
                }
            }
            if (prev_node[sink] == -1) break;
            for (int i = 0; i < n; ++i)
                if (dist[i] < std::numeric_limits<double>::infinity()) potential[i] += dist[i];
            for (int v = sink; v != source; v = prev_node[v]) {
                Edge& edge = graph_[prev_node[v]][static_cast<std::size_t>(prev_edge[v])];
                edge.cap -= 1;
                graph_[v][static_cast<std::size_t>(edge.rev)].cap += 1;
            }
            ++flow;
        }
        return flow;
    }

    struct Edge {
        int to;
        int cap;
        double cost;
        int rev;
    };
    std::vector<std::vector<Edge>> graph_;
};

struct PredRow {
    std::string audiofile;
    Interval interval;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<PredRow> parse_prediction_csv(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) throw ParseError("empty prediction document");

    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(trim(cell));
    }
    if (header.size() < 3 || header[0] != "Audiofilename" || header[1] != "Starttime" ||
        header[2] != "Endtime")
        throw ParseError("prediction header must be Audiofilename,Starttime,Endtime");

    std::vector<PredRow> rows;
    int line_no = 1;
    while (std::getline(ss, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::stringstream ls(line);
        std::string file, start, end;
        if (!std::getline(ls, file, ',') || !std::getline(ls, start, ',') ||
            !std::getline(ls, end, ','))
            throw ParseError("prediction line " + std::to_string(line_no) +
                             ": expected 3 cells");
        PredRow row;
        row.audiofile = trim(file);
        try {
            row.interval.start = std::stod(start);
            row.interval.end = std::stod(end);
        } catch (const std::exception&) {
            throw ParseError("prediction line " + std::to_string(line_no) +
                             ": non-numeric time");
        }
        if (!(row.interval.start < row.interval.end))
            throw ParseError("prediction line " + std::to_string(line_no) +
                             ": requires start < end");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

double iou(const Interval& a, const Interval& b) {
    const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter <= 0) return 0.0;
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return inter / uni;
}

std::vector<Interval> remove_unk(const std::vector<Interval>& preds,
                                 const std::vector<Interval>& unk) {
    std::vector<Interval> kept;
    for (const Interval& p : preds) {
        bool overlaps = false;
        for (const Interval& u : unk)
            if (std::min(p.end, u.end) - std::max(p.start, u.start) > 0) {
                overlaps = true;
                break;
            }
        if (!overlaps) kept.push_back(p);
    }
    return kept;
}

MatchResult match_events(const std::vector<Interval>& preds,
                         const std::vector<Interval>& gts, double min_iou) {
    const int n_preds = static_cast<int>(preds.size());
    const int n_gts = static_cast<int>(gts.size());
    const int source = n_preds + n_gts;
    const int sink = source + 1;

    MatchingSolver solver(n_preds + n_gts + 2);
    for (int i = 0; i < n_preds; ++i) solver.add_edge(source, i, 0.0);
    for (int j = 0; j < n_gts; ++j) solver.add_edge(n_preds + j, sink, 0.0);
    for (int i = 0; i < n_preds; ++i)
        for (int j = 0; j < n_gts; ++j) {
            const double v = iou(preds[static_cast<std::size_t>(i)],
                                 gts[static_cast<std::size_t>(j)]);
            if (v >= min_iou) solver.add_edge(i, n_preds + j, 1.0 - v);
        }

    MatchResult result;
    result.tp = solver.run(source, sink);
    for (int i = 0; i < n_preds; ++i)
        for (const auto& edge : solver.graph_[static_cast<std::size_t>(i)])
            if (edge.to >= n_preds && edge.to < n_preds + n_gts && edge.cap == 0)
                result.pairs.emplace_back(i, edge.to - n_preds);
    std::sort(result.pairs.begin(), result.pairs.end());
    result.fp = n_preds - result.tp;
    result.fn = n_gts - result.tp;
    return result;
}

Metrics compute_metrics(long tp, long fp, long fn) {
    if (tp < 0 || fp < 0 || fn < 0) throw DataError("counts must be nonnegative");
    Metrics m;
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    m.fscore = (m.precision + m.recall) > 0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    return m;
}

nlohmann::json ScoreReport::to_json() const {
    nlohmann::json per;
    for (const auto& [file, score] : per_file) {
        per[file] = {
            {"tp", score.match.tp},       {"fp", score.match.fp},
            {"fn", score.match.fn},       {"precision", score.metrics.precision},
            {"recall", score.metrics.recall}, {"fscore", score.metrics.fscore},
        };
    }
    return nlohmann::json{
        {"per_file", per},
        {"pooled",
         {{"tp", tp},
          {"fp", fp},
          {"fn", fn},
          {"precision", pooled.precision},
          {"recall", pooled.recall},
          {"fscore", pooled.fscore}}},
    };
}

ScoreReport score_file(const std::string& pred_csv_text,
                       const std::string& gt_csv_text, double min_iou) {
    const std::vector<PredRow> pred_rows = parse_prediction_csv(pred_csv_text);
    const AnnotationFile gt = parse_annotation_file(gt_csv_text);

    std::map<std::string, std::vector<Interval>> preds_by_file, gts_by_file,
        unks_by_file;
    std::set<std::string> gt_recordings;
    for (const AnnotationRow& row : gt.rows) {
        gt_recordings.insert(row.audiofile);
        bool pos = false, unk = false;
        for (const auto& [name, tag] : row.labels) {
            pos = pos || tag == LabelTag::Pos;
            unk = unk || tag == LabelTag::Unk;
        }
        if (pos)
            gts_by_file[row.audiofile].push_back({row.start, row.end});
        else if (unk)
            unks_by_file[row.audiofile].push_back({row.start, row.end});
    }
    for (const PredRow& row : pred_rows) {
        if (!gt_recordings.count(row.audiofile))
            throw DataError("prediction for unknown recording: " + row.audiofile);
        preds_by_file[row.audiofile].push_back(row.interval);
    }

    ScoreReport report;
    for (const std::string& file : gt_recordings) {
        const std::vector<Interval> kept =
            remove_unk(preds_by_file[file], unks_by_file[file]);
        FileScore score;
        score.match = match_events(kept, gts_by_file[file], min_iou);
        score.metrics = compute_metrics(score.match.tp, score.match.fp, score.match.fn);
        score.n_preds = static_cast<int>(kept.size());
        score.n_gts = static_cast<int>(gts_by_file[file].size());
        report.tp += score.match.tp;
        report.fp += score.match.fp;
        report.fn += score.match.fn;
        report.per_file.emplace(file, std::move(score));
    }
    report.pooled = compute_metrics(report.tp, report.fp, report.fn);
    return report;
}

}  // namespace fsed
