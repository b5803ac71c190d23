#include "fsed/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fsed/errors.hpp"

namespace fsed {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

LabelTag tag_from_cell(const std::string& cell, int line_no) {
    if (cell == "POS") return LabelTag::Pos;
    if (cell == "UNK") return LabelTag::Unk;
    if (cell == "NEG") return LabelTag::Neg;
    throw ParseError("line " + std::to_string(line_no) +
                     ": unknown label token '" + cell + "'");
}

std::map<int, std::vector<std::size_t>> indices_by_class(
    const std::vector<LabeledPatch>& pool) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.size(); ++i)
        by_class[pool[i].class_id].push_back(i);
    return by_class;
}

}  // namespace

AnnotationFile parse_annotation_file(const std::string& csv_text) {
    std::stringstream ss(csv_text);
    std::string line;
    if (!std::getline(ss, line)) throw ParseError("empty annotation document");

    const std::vector<std::string> header = split_csv_line(line);
    auto require = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ParseError("missing header column: " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t file_col = require("Audiofilename");
    const std::size_t start_col = require("Starttime");
    const std::size_t end_col = require("Endtime");

    AnnotationFile result;
    std::vector<std::size_t> class_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == file_col || c == start_col || c == end_col) continue;
        if (header[c].empty()) continue;
        result.class_columns.push_back(header[c]);
        class_cols.push_back(c);
    }
    if (class_cols.empty()) throw ParseError("annotation header has no class column");

    int line_no = 1;
    while (std::getline(ss, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() < header.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        AnnotationRow row;
        row.audiofile = cells[file_col];
        try {
            std::size_t used = 0;
            row.start = std::stod(cells[start_col], &used);
            if (used != cells[start_col].size()) throw std::invalid_argument("trailing");
            row.end = std::stod(cells[end_col], &used);
            if (used != cells[end_col].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": non-numeric time");
        }
        if (!(row.start >= 0) || !(row.start < row.end))
            throw ParseError("line " + std::to_string(line_no) +
                             ": requires 0 <= start < end");
        for (std::size_t i = 0; i < class_cols.size(); ++i)
            row.labels[result.class_columns[i]] = tag_from_cell(cells[class_cols[i]], line_no);
        result.rows.push_back(std::move(row));
    }
    return result;
}

std::vector<AnnotationRow> parse_annotations(const std::string& csv_text) {
    return parse_annotation_file(csv_text).rows;
}

ClassMap ClassMap::from_columns(const std::vector<std::string>& columns) {
    ClassMap map;
    std::set<std::string> uniq(columns.begin(), columns.end());
    map.names.assign(uniq.begin(), uniq.end());
    return map;
}

int ClassMap::id_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("unknown class name: " + name);
    return static_cast<int>(it - names.begin()) + 1;
}

std::vector<LabeledPatch> label_patches(const std::vector<Patch>& patches,
                                        double frame_hop_seconds,
                                        const std::vector<AnnotationRow>& rows,
                                        const ClassMap& classes,
                                        double overlap_frac,
                                        const std::string& recording,
                                        int patch_len) {
    const double patch_dur = patch_len * frame_hop_seconds;

    std::vector<LabeledPatch> out;
    out.reserve(patches.size());
    for (const Patch& p : patches) {
        const double p_start = p.start_frame * frame_hop_seconds;
        const double p_end = p_start + patch_dur;

        // Best single-event overlap per class.
        double best_overlap = 0;
        int best_class = 0;
        bool touches_unk = false;
        for (const AnnotationRow& row : rows) {
            const double ov =
                std::min(p_end, row.end) - std::max(p_start, row.start);
            if (ov <= 0) continue;
            for (const auto& [name, tag] : row.labels) {
                if (tag == LabelTag::Unk) touches_unk = true;
                if (tag != LabelTag::Pos) continue;
                if (ov + 1e-12 < overlap_frac * patch_dur) continue;
                const int cid = classes.id_of(name);
                if (ov > best_overlap + 1e-12 ||
                    (std::abs(ov - best_overlap) <= 1e-12 && best_class != 0 &&
                     cid < best_class)) {
                    best_overlap = ov;
                    best_class = cid;
                }
            }
        }
        if (best_class == 0 && touches_unk) continue;  // uncertain region

        LabeledPatch lp;
        lp.features = p.flatten();
        lp.class_id = best_class;
        lp.recording = recording;
        lp.start_frame = p.start_frame;
        out.push_back(std::move(lp));
    }
    return out;
}

std::vector<LabeledPatch> balance_oversample(const std::vector<LabeledPatch>& pool,
                                             Rng& rng) {
    if (pool.empty()) throw DataError("cannot balance an empty pool");

    auto by_class = indices_by_class(pool);
    std::size_t target = 0;
    for (const auto& [cid, idx] : by_class)
        if (cid != 0) target = std::max(target, idx.size());

    std::vector<LabeledPatch> out = pool;
    for (const auto& [cid, idx] : by_class) {
        if (cid == 0) continue;  // background is left unchanged
        for (std::size_t have = idx.size(); have < target; ++have)
            out.push_back(pool[idx[rng.uniform_int(idx.size())]]);
    }
    return out;
}

std::pair<std::vector<LabeledPatch>, std::vector<LabeledPatch>> split_train_val(
    const std::vector<LabeledPatch>& pool, double val_frac, Rng& rng) {
    if (!(val_frac > 0.0 && val_frac < 1.0))
        throw DataError("val_frac must lie in (0, 1)");

    std::vector<LabeledPatch> train, val;
    for (auto& [cid, idx] : indices_by_class(pool)) {
        if (idx.size() == 1) {
            std::cerr << "warning: class " << cid
                      << " has a single patch; keeping it in train\n";
            train.push_back(pool[idx[0]]);
            continue;
        }
        rng.shuffle(idx);
        const std::size_t n_val =
            static_cast<std::size_t>(std::ceil(val_frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val : train).push_back(pool[idx[i]]);
    }
    return {std::move(train), std::move(val)};
}

void EpisodeSpec::validate() const {
    if (n_way < 2) throw DataError("n_way must be >= 2");
    if (k_shot < 1) throw DataError("k_shot must be >= 1");
    if (n_query < 1) throw DataError("n_query must be >= 1");
}

Episode sample_episode(const std::vector<LabeledPatch>& pool,
                       const EpisodeSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t need = static_cast<std::size_t>(spec.k_shot) + spec.n_query;

    auto by_class = indices_by_class(pool);
    std::vector<int> eligible;
    for (const auto& [cid, idx] : by_class)
        if (idx.size() >= need) eligible.push_back(cid);

    if (eligible.size() < static_cast<std::size_t>(spec.n_way))
        throw DataError("episode needs " + std::to_string(spec.n_way) +
                        " classes with >= " + std::to_string(need) +
                        " patches, pool has " + std::to_string(eligible.size()));

    rng.shuffle(eligible);
    eligible.resize(spec.n_way);

    const Eigen::Index dim = pool.front().features.size();
    Episode ep;
    ep.class_map = eligible;
    ep.support_x.resize(static_cast<Eigen::Index>(spec.n_way) * spec.k_shot, dim);
    ep.query_x.resize(static_cast<Eigen::Index>(spec.n_way) * spec.n_query, dim);

    Eigen::Index s_row = 0, q_row = 0;
    for (int k = 0; k < spec.n_way; ++k) {
        std::vector<std::size_t> idx = by_class[eligible[k]];
        rng.shuffle(idx);
        for (int i = 0; i < spec.k_shot; ++i) {
            ep.support_x.row(s_row++) = pool[idx[i]].features.cast<double>();
            ep.support_y.push_back(k);
        }
        for (int i = 0; i < spec.n_query; ++i) {
            ep.query_x.row(q_row++) =
                pool[idx[spec.k_shot + i]].features.cast<double>();
            ep.query_y.push_back(k);
        }
    }
    return ep;
}

void write_patch_cache(const std::string& path,
                       const std::vector<LabeledPatch>& pool) {
    const Eigen::Index dim = pool.empty() ? 0 : pool.front().features.size();
    nlohmann::json header = {
        {"dim", dim},
        {"n_patches", pool.size()},
    };
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write patch cache: " + path);
    out << header.dump() << '\n';
    for (const LabeledPatch& p : pool)
        out.write(reinterpret_cast<const char*>(p.features.data()),
                  static_cast<std::streamsize>(sizeof(float)) * dim);
    for (const LabeledPatch& p : pool) {
        const std::int32_t cid = p.class_id;
        out.write(reinterpret_cast<const char*>(&cid), sizeof cid);
    }
    if (!out) throw IngestionError("failed writing patch cache: " + path);
}

std::vector<LabeledPatch> read_patch_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open patch cache: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("empty patch cache: " + path);

    Eigen::Index dim = 0;
    std::size_t n = 0;
    try {
        nlohmann::json header = nlohmann::json::parse(line);
        dim = header.at("dim").get<Eigen::Index>();
        n = header.at("n_patches").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad patch cache header in " + path + ": " + e.what());
    }

    std::vector<LabeledPatch> pool(n);
    for (LabeledPatch& p : pool) {
        p.features.resize(dim);
        if (!in.read(reinterpret_cast<char*>(p.features.data()),
                     static_cast<std::streamsize>(sizeof(float)) * dim))
            throw IngestionError("truncated patch cache payload in: " + path);
    }
    for (LabeledPatch& p : pool) {
        std::int32_t cid;
        if (!in.read(reinterpret_cast<char*>(&cid), sizeof cid))
            throw IngestionError("truncated patch cache class ids in: " + path);
        p.class_id = cid;
    }
    return pool;
}

}  // namespace fsed
