#include "fsed/detector.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "fsed/errors.hpp"
#include "fsed/objective.hpp"

namespace fsed {

namespace {

bool is_pos_row(const AnnotationRow& row) {
    for (const auto& [name, tag] : row.labels)
        if (tag == LabelTag::Pos) return true;
    return false;
}

double overlap_len(double a0, double a1, double b0, double b1) {
    return std::min(a1, b1) - std::max(a0, b0);
}

// One patch centred on an event shorter than a patch: the event's frames sit
// in the middle, zeros elsewhere.
Patch centered_patch(const MelPcenGram& gram, double ev_start, double ev_end,
                     int patch_len) {
    const double hs = gram.frame_hop_seconds();
    int f0 = static_cast<int>(std::llround(ev_start / hs));
    int f1 = static_cast<int>(std::llround(ev_end / hs));
    f0 = std::clamp(f0, 0, std::max(0, gram.n_frames() - 1));
    f1 = std::clamp(f1, f0 + 1, gram.n_frames());
    const int ev_len = std::min(f1 - f0, patch_len);
    const int offset = (patch_len - ev_len) / 2;

    Patch p;
    p.start_frame = f0 - offset;
    p.values = Eigen::MatrixXf::Zero(patch_len, gram.n_mels());
    p.values.middleRows(offset, ev_len) = gram.frames.middleRows(f0, ev_len);
    return p;
}

Eigen::MatrixXd stack_patch_features(const std::vector<Patch>& patches) {
    Eigen::MatrixXd X(patches.size(), patches.front().values.size());
    for (std::size_t i = 0; i < patches.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = patches[i].flatten().cast<double>();
    return X;
}

}  // namespace

void DetectionConfig::validate() const {
    if (!(prob_threshold > 0 && prob_threshold < 1))
        throw DataError("prob_threshold must lie in (0, 1)");
    if (median_filter_width < 1 || median_filter_width % 2 == 0)
        throw DataError("median_filter_width must be odd and >= 1");
    if (patch_len < 1) throw DataError("patch_len must be >= 1");
    if (patch_hop < 1) throw DataError("patch_hop must be >= 1");
    if (min_event_duration < 0) throw DataError("min_event_duration must be >= 0");
}

SupportPatches build_support(const MelPcenGram& gram,
                             const std::vector<AnnotationRow>& first5,
                             const DetectionConfig& config) {
    config.validate();
    if (first5.size() != 5)
        throw DataError("support requires exactly 5 POS annotations, got " +
                        std::to_string(first5.size()));
    const double hs = gram.frame_hop_seconds();
    const double duration = gram.n_frames() * hs;
    double support_end = 0;
    for (const AnnotationRow& row : first5) {
        if (!is_pos_row(row)) throw DataError("support annotation is not POS");
        if (row.end > duration + hs)
            throw DataError("support event ends after the recording does");
        support_end = std::max(support_end, row.end);
    }

    const double patch_dur = config.patch_len * hs;
    SupportPatches support;
    support.support_end_time = support_end;

    for (const Patch& p : make_patches(gram, config.patch_len, config.patch_hop)) {
        const double p0 = p.start_frame * hs;
        const double p1 = p0 + patch_dur;
        double best = 0;
        for (const AnnotationRow& row : first5)
            best = std::max(best, overlap_len(p0, p1, row.start, row.end));
        // 1e-9 s absorbs rounding in the second-domain interval arithmetic.
        if (best + 1e-12 >= 0.5 * patch_dur) {
            support.pos.push_back(p);
        } else if (p1 <= support_end + 1e-9 && best <= 1e-9) {
            support.neg.push_back(p);
        }
    }
    for (const AnnotationRow& row : first5)
        if (row.end - row.start + 1e-9 < patch_dur)
            support.pos.push_back(centered_patch(gram, row.start, row.end,
                                                 config.patch_len));

    if (support.pos.empty()) throw DataError("no positive support patches extracted");
    if (support.neg.empty())
        throw DataError("no negative support patches before the 5th event's end");
    return support;
}

std::vector<std::pair<int, double>> frame_probabilities(
    const EnsembleModel& ensemble, const MelPcenGram& gram,
    const SupportPatches& support, const DetectionConfig& config) {
    config.validate();
    if (ensemble.members.empty()) throw DataError("ensemble has no members");
    if (support.pos.empty() || support.neg.empty())
        throw DataError("support must be nonempty on both sides");

    const double hs = gram.frame_hop_seconds();
    std::vector<Patch> queries;
    for (Patch& p : make_patches(gram, config.patch_len, config.patch_hop))
        if (p.start_frame * hs + 1e-12 >= support.support_end_time)
            queries.push_back(std::move(p));
    if (queries.empty()) return {};

    const Eigen::MatrixXd pos_x = stack_patch_features(support.pos);
    const Eigen::MatrixXd neg_x = stack_patch_features(support.neg);
    const Eigen::MatrixXd query_x = stack_patch_features(queries);

    Eigen::VectorXd p_pos = Eigen::VectorXd::Zero(query_x.rows());
    for (const auto& [model, kernel] : ensemble.members) {
        Eigen::MatrixXd protos(2, model.out_dim());
        protos.row(0) = embed_batch(model, pos_x).colwise().mean();
        protos.row(1) = embed_batch(model, neg_x).colwise().mean();
        const Eigen::MatrixXd dists = pairwise_squared_distances(
            kernel, embed_batch(model, query_x), protos);
        p_pos += class_probabilities(dists).col(0);
    }
    p_pos /= static_cast<double>(ensemble.members.size());

    std::vector<std::pair<int, double>> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        out.emplace_back(queries[i].start_frame, p_pos(static_cast<Eigen::Index>(i)));
    return out;
}

std::vector<PredictedEvent> extract_events(
    const std::vector<std::pair<int, double>>& probs, double frame_hop_seconds,
    const DetectionConfig& config) {
    config.validate();
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i].first <= probs[i - 1].first)
            throw DataError("patch probabilities must be in increasing frame order");

    // Median filter with edge-truncated windows (lower median).
    std::vector<double> p(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) p[i] = probs[i].second;
    if (config.median_filter_width > 1 && !p.empty()) {
        const int half = config.median_filter_width / 2;
        std::vector<double> filtered(p.size());
        std::vector<double> window;
        for (std::size_t i = 0; i < p.size(); ++i) {
            window.clear();
            const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - half : 0;
            const std::size_t hi = std::min(p.size() - 1, i + half);
            for (std::size_t j = lo; j <= hi; ++j) window.push_back(p[j]);
            std::sort(window.begin(), window.end());
            filtered[i] = window[(window.size() - 1) / 2];
        }
        p = std::move(filtered);
    }

    std::vector<PredictedEvent> events;
    std::size_t i = 0;
    while (i < p.size()) {
        if (p[i] <= config.prob_threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        double score_sum = 0;
        while (j < p.size() && p[j] > config.prob_threshold) score_sum += p[j++];

        PredictedEvent ev;
        ev.start = probs[i].first * frame_hop_seconds;
        ev.end = (probs[j - 1].first + config.patch_len) * frame_hop_seconds;
        ev.score = score_sum / static_cast<double>(j - i);
        events.push_back(ev);
        i = j;
    }
    // A patch extends patch_len frames past its start, so with patch_hop <
    // patch_len a one-patch gap between runs can still overlap in time; clip
    // so emitted events stay disjoint.
    for (std::size_t k = 0; k + 1 < events.size(); ++k)
        events[k].end = std::min(events[k].end, events[k + 1].start);
    std::erase_if(events, [&](const PredictedEvent& ev) {
        return ev.end - ev.start < config.min_event_duration;
    });
    return events;
}

std::vector<PredictedEvent> detect(const EnsembleModel& ensemble,
                                   const MelPcenGram& gram,
                                   const std::vector<AnnotationRow>& first5,
                                   const DetectionConfig& config) {
    const SupportPatches support = build_support(gram, first5, config);
    const auto probs = frame_probabilities(ensemble, gram, support, config);
    return extract_events(probs, gram.frame_hop_seconds(), config);
}

std::string prediction_csv(const std::string& audiofile,
                           const std::vector<PredictedEvent>& events) {
    std::ostringstream out;
    out << "Audiofilename,Starttime,Endtime\n";
    out << std::fixed << std::setprecision(6);
    for (const PredictedEvent& ev : events)
        out << audiofile << ',' << ev.start << ',' << ev.end << '\n';
    return out.str();
}

}  // namespace fsed
