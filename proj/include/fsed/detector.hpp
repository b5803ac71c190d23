#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fsed/audio.hpp"
#include "fsed/corpus.hpp"
#include "fsed/ensemble.hpp"

namespace fsed {

struct DetectionConfig {
    double prob_threshold = 0.5;
    int patch_len = 17;
    int patch_hop = 8;             // frames
    int median_filter_width = 1;   // odd; 1 = off
    double min_event_duration = 0; // seconds

    void validate() const;  // throws DataError on a bad field
};

/// A timed detection; score is the mean positive probability of its patches.
struct PredictedEvent {
    double start = 0;  // seconds
    double end = 0;    // seconds
    double score = 0;
};

/// Support material carved out of the annotated prefix of a recording.
struct SupportPatches {
    std::vector<Patch> pos;
    std::vector<Patch> neg;
    double support_end_time = 0;  // end of the 5th event, seconds
};

/// Builds the 5-shot support sets. Positive patches are the stride-grid
/// patches lying >= 50% inside any of the five events (events shorter than
/// one patch contribute one zero-padded patch centred on the event); negative
/// patches are the grid patches before the 5th event's end that do not touch
/// any positive event. Requires exactly 5 POS rows and a nonempty result on
/// both sides.
SupportPatches build_support(const MelPcenGram& gram,
                             const std::vector<AnnotationRow>& first5,
                             const DetectionConfig& config);

/// Two-way positive probability for every grid patch starting at or after the
/// support prefix. Ensemble members are combined by the arithmetic mean of
/// their probabilities.
std::vector<std::pair<int, double>> frame_probabilities(
    const EnsembleModel& ensemble, const MelPcenGram& gram,
    const SupportPatches& support, const DetectionConfig& config);

/// Optional odd-width median filter, threshold, then maximal runs of
/// consecutive above-threshold patches become events:
///   start = first patch start_frame * hop / sr
///   end   = (last patch start_frame + patch_len) * hop / sr
/// Events shorter than min_event_duration are dropped.
std::vector<PredictedEvent> extract_events(
    const std::vector<std::pair<int, double>>& probs,
    double frame_hop_seconds, const DetectionConfig& config);

/// build_support -> frame_probabilities -> extract_events.
std::vector<PredictedEvent> detect(const EnsembleModel& ensemble,
                                   const MelPcenGram& gram,
                                   const std::vector<AnnotationRow>& first5,
                                   const DetectionConfig& config);

/// Prediction CSV: "Audiofilename,Starttime,Endtime", times with 6 decimals.
std::string prediction_csv(const std::string& audiofile,
                           const std::vector<PredictedEvent>& events);

}  // namespace fsed
