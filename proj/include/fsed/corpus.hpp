#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fsed/audio.hpp"
#include "fsed/rng.hpp"

namespace fsed {

enum class LabelTag { Pos, Unk, Neg };

/// One annotation line: a timed event with a POS/UNK/NEG cell per class column.
struct AnnotationRow {
    std::string audiofile;
    double start = 0;  // seconds
    double end = 0;    // seconds
    std::map<std::string, LabelTag> labels;
};

/// Parsed annotation CSV: class columns in header order plus the data rows.
struct AnnotationFile {
    std::vector<std::string> class_columns;
    std::vector<AnnotationRow> rows;
};

/// Parses a DCASE-style annotation CSV. The header must name Audiofilename,
/// Starttime and Endtime plus at least one class column; class cells are
/// restricted to POS / UNK / NEG. Throws ParseError with the offending column
/// or line number.
AnnotationFile parse_annotation_file(const std::string& csv_text);
std::vector<AnnotationRow> parse_annotations(const std::string& csv_text);

/// Stable mapping from event-class name to class id 1..C (0 = background).
struct ClassMap {
    std::vector<std::string> names;  // sorted; names[i] has class_id i + 1

    static ClassMap from_columns(const std::vector<std::string>& columns);
    int id_of(const std::string& name) const;     // throws DataError if absent
    int n_event_classes() const { return static_cast<int>(names.size()); }
};

/// A flattened feature patch with its class id and provenance.
struct LabeledPatch {
    Eigen::VectorXf features;
    int class_id = 0;  // 0 = background, 1..C = event classes
    std::string recording;
    int start_frame = 0;
};

/// Assigns class c to a patch whose span overlaps a POS event of class c for
/// at least overlap_frac of the patch duration; ties go to the class with the
/// greatest overlap, then the lowest class id. Patches that qualify for no
/// class but touch an UNK span are dropped; everything else is background.
std::vector<LabeledPatch> label_patches(const std::vector<Patch>& patches,
                                        double frame_hop_seconds,
                                        const std::vector<AnnotationRow>& rows,
                                        const ClassMap& classes,
                                        double overlap_frac = 0.5,
                                        const std::string& recording = {},
                                        int patch_len = 17);

/// Duplicates each event class (uniform with replacement from its own
/// patches) until it matches the largest event-class count. Background is
/// left unchanged and every original item is retained.
std::vector<LabeledPatch> balance_oversample(
    const std::vector<LabeledPatch>& pool, Rng& rng);

/// Per-class split: ceil(val_frac * count) patches of each class go to
/// validation. A class with a single patch stays in train (warning on
/// stderr).
std::pair<std::vector<LabeledPatch>, std::vector<LabeledPatch>> split_train_val(
    const std::vector<LabeledPatch>& pool, double val_frac, Rng& rng);

struct EpisodeSpec {
    int n_way = 10;
    int k_shot = 5;
    int n_query = 5;

    void validate() const;  // throws DataError on a bad field
};

/// A sampled mini-task: support defines the prototypes, query is scored.
/// Features are stored densely, one row per item, labels are episode-local
/// class indices and class_map maps them back to global class ids.
struct Episode {
    Eigen::MatrixXd support_x;
    std::vector<int> support_y;
    Eigen::MatrixXd query_x;
    std::vector<int> query_y;
    std::vector<int> class_map;

    int n_way() const { return static_cast<int>(class_map.size()); }
};

/// Draws n_way eligible classes uniformly without replacement, then
/// k_shot + n_query distinct patches per class; the first k_shot become
/// support. Throws DataError naming the deficit when the pool is too small.
Episode sample_episode(const std::vector<LabeledPatch>& pool,
                       const EpisodeSpec& spec, Rng& rng);

/// Labeled-patch cache: JSON header {"dim","n_patches"} + '\n', then
/// n_patches * dim little-endian float32, then n_patches little-endian
/// int32 class ids.
void write_patch_cache(const std::string& path,
                       const std::vector<LabeledPatch>& pool);
std::vector<LabeledPatch> read_patch_cache(const std::string& path);

}  // namespace fsed
