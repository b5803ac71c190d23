// fsed: few-shot bioacoustic sound event detection.
//
// Subcommands: extract, train, detect, score, verify.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsed/audio.hpp"
#include "fsed/corpus.hpp"
#include "fsed/detector.hpp"
#include "fsed/errors.hpp"
#include "fsed/evaluator.hpp"
#include "fsed/trainer.hpp"
#include "fsed/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : fsed::Error {
    using fsed::Error::Error;
};

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw fsed::IngestionError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw fsed::IngestionError("cannot write file: " + path);
    out << text;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string e = entry.path().extension().string();
        std::transform(e.begin(), e.end(), e.begin(), ::tolower);
        if (e == ext) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

// --config <file>: a flat JSON object whose keys are the long option names.
// Its values are injected as options ahead of the user's flags, so explicit
// flags always win (every scalar option takes the last occurrence).
std::vector<std::string> config_tokens(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw UsageError("bad config file " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");

    std::vector<std::string> tokens;
    for (const auto& [key, value] : doc.items()) {
        if (key == "config") continue;
        auto push = [&](const json& v) {
            std::string s;
            if (v.is_string())
                s = v.get<std::string>();
            else if (v.is_boolean())
                s = v.get<bool>() ? "true" : "false";
            else
                s = v.dump();
            tokens.push_back("--" + key + "=" + s);
        };
        if (value.is_array())
            for (const json& v : value) push(v);
        else
            push(value);
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string audio_dir;
    std::string features_dir;
    fsed::SpectrogramConfig spec;
};

int cmd_extract(const ExtractArgs& args) {
    args.spec.validate();
    const auto wavs = list_files(args.audio_dir, ".wav");
    if (wavs.empty())
        throw UsageError("no WAV files in: " + args.audio_dir);
    fs::create_directories(args.features_dir);

    std::size_t failures = 0;
    for (const std::string& wav : wavs) {
        try {
            fsed::AudioClip clip = fsed::load_audio(wav);
            clip.source_path = fs::path(wav).filename().string();
            const fsed::MelPcenGram gram = fsed::extract_features(clip, args.spec);
            const std::string out = (fs::path(args.features_dir) /
                                     fs::path(wav).stem())
                                        .string() +
                                    ".feat";
            fsed::write_feature_file(out, gram);
            std::cerr << "extracted " << gram.n_frames() << " frames: " << out << "\n";
        } catch (const fsed::Error& e) {
            ++failures;
            std::cerr << "error: " << e.what() << "\n";
        }
    }
    if (failures == wavs.size())
        throw fsed::IngestionError("feature extraction failed for every file");
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string features_dir;
    std::vector<std::string> annotations;
    std::string checkpoint = "model.json";
    std::string report;
    std::string kind = "logistic";
    int patch_len = 17;
    int patch_hop = 8;
    double overlap_frac = 0.5;
    double val_frac = 0.2;
    fsed::TrainConfig config;
};

std::vector<std::string> expand_annotation_paths(const std::vector<std::string>& paths) {
    std::vector<std::string> out;
    for (const std::string& p : paths) {
        if (fs::is_directory(p)) {
            auto csvs = list_files(p, ".csv");
            out.insert(out.end(), csvs.begin(), csvs.end());
        } else {
            out.push_back(p);
        }
    }
    if (out.empty()) throw UsageError("no annotation CSV files given");
    return out;
}

std::vector<fsed::LabeledPatch> build_pool(const TrainArgs& args,
                                           const fsed::ClassMap& classes,
                                           const std::map<std::string, std::vector<fsed::AnnotationRow>>& by_file) {
    std::vector<fsed::LabeledPatch> pool;
    for (const auto& [audiofile, rows] : by_file) {
        const std::string feat = (fs::path(args.features_dir) /
                                  fs::path(audiofile).stem())
                                     .string() +
                                 ".feat";
        const fsed::MelPcenGram gram = fsed::read_feature_file(feat);
        const auto patches = fsed::make_patches(gram, args.patch_len, args.patch_hop);
        auto labeled = fsed::label_patches(patches, gram.frame_hop_seconds(), rows,
                                           classes, args.overlap_frac, audiofile,
                                           args.patch_len);
        pool.insert(pool.end(), std::make_move_iterator(labeled.begin()),
                    std::make_move_iterator(labeled.end()));
    }
    if (pool.empty()) throw fsed::DataError("no labeled patches in the corpus");
    return pool;
}

int cmd_train(const TrainArgs& args) {
    std::vector<std::string> columns;
    std::map<std::string, std::vector<fsed::AnnotationRow>> by_file;
    for (const std::string& path : expand_annotation_paths(args.annotations)) {
        const fsed::AnnotationFile file = fsed::parse_annotation_file(read_text_file(path));
        columns.insert(columns.end(), file.class_columns.begin(),
                       file.class_columns.end());
        for (const fsed::AnnotationRow& row : file.rows)
            by_file[row.audiofile].push_back(row);
    }
    const fsed::ClassMap classes = fsed::ClassMap::from_columns(columns);

    std::vector<fsed::LabeledPatch> pool = build_pool(args, classes, by_file);
    const fsed::Rng root(args.config.seed);
    fsed::Rng split_rng = root.child("split");
    fsed::Rng balance_rng = root.child("balance");
    auto [train_pool, val_pool] = fsed::split_train_val(pool, args.val_frac, split_rng);
    train_pool = fsed::balance_oversample(train_pool, balance_rng);
    std::cerr << "pool: " << train_pool.size() << " train / " << val_pool.size()
              << " val patches, " << classes.n_event_classes() << " event classes\n";

    std::string report_lines;
    if (args.kind == "ensemble") {
        auto [ensemble, reports] =
            fsed::train_ensemble(train_pool, val_pool, args.config);
        fsed::save_ensemble_checkpoint(ensemble, args.checkpoint);
        for (std::size_t m = 0; m < reports.size(); ++m) {
            for (const fsed::EpochStats& e : reports[m].epochs) {
                json j;
                j["epoch"] = e.epoch;
                j["mean_loss"] = e.mean_loss;
                j["member"] = m;
                j["val_accuracy"] = e.val_accuracy;
                report_lines += j.dump() + "\n";
            }
            std::cerr << "member " << m << ": final val accuracy "
                      << reports[m].final_val_accuracy << " ("
                      << reports[m].wall_clock_seconds << " s)\n";
        }
    } else {
        fsed::TrainConfig config = args.config;
        config.model_kind = fsed::model_kind_from_string(args.kind);
        fsed::TrainResult result = fsed::train(train_pool, val_pool, config);
        fsed::save_checkpoint(result.model, result.kernel, args.checkpoint);
        report_lines = result.report.to_json_lines();
        std::cerr << "final val accuracy " << result.report.final_val_accuracy << " ("
                  << result.report.wall_clock_seconds << " s)\n";
    }
    if (!args.report.empty()) write_text_file(args.report, report_lines);
    return 0;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
    std::string checkpoint;
    std::string features;
    std::string annotations;
    std::string output = "predictions.csv";
    fsed::DetectionConfig config;
};

int cmd_detect(const DetectArgs& args) {
    args.config.validate();
    const fsed::EnsembleModel ensemble = fsed::load_any_checkpoint(args.checkpoint);
    const fsed::MelPcenGram gram = fsed::read_feature_file(args.features);

    std::vector<fsed::AnnotationRow> first5;
    for (const fsed::AnnotationRow& row :
         fsed::parse_annotations(read_text_file(args.annotations))) {
        if (row.audiofile != gram.source_path) continue;
        bool pos = false;
        for (const auto& [name, tag] : row.labels) pos = pos || tag == fsed::LabelTag::Pos;
        if (pos && first5.size() < 5) first5.push_back(row);
    }
    if (first5.size() < 5)
        throw fsed::DataError("need 5 POS annotations for " + gram.source_path +
                              ", found " + std::to_string(first5.size()));

    const auto events = fsed::detect(ensemble, gram, first5, args.config);
    write_text_file(args.output, fsed::prediction_csv(gram.source_path, events));
    std::cerr << "wrote " << events.size() << " events: " << args.output << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// score / verify
// ---------------------------------------------------------------------------

int cmd_score(const std::string& pred, const std::string& gt, double min_iou) {
    const fsed::ScoreReport report =
        fsed::score_file(read_text_file(pred), read_text_file(gt), min_iou);
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_verify(std::uint64_t seed) {
    fsed::VerifyOptions options;
    options.seed = seed;
    bool all_passed = true;
    for (const fsed::SuiteResult& r : fsed::run_verification(options)) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail
                  << "\n";
        all_passed = all_passed && r.passed;
    }
    return all_passed ? 0 : 3;
}

void add_spectrogram_options(CLI::App* cmd, fsed::SpectrogramConfig& spec) {
    cmd->add_option("--n-fft", spec.n_fft, "FFT size in samples");
    cmd->add_option("--hop-length", spec.hop_length, "hop size in samples");
    cmd->add_option("--n-mels", spec.n_mels, "mel band count");
    cmd->add_option("--pcen-gain", spec.pcen_gain, "PCEN gain alpha");
    cmd->add_option("--pcen-bias", spec.pcen_bias, "PCEN bias delta");
    cmd->add_option("--pcen-power", spec.pcen_power, "PCEN power r");
    cmd->add_option("--pcen-time-constant", spec.pcen_time_constant,
                    "PCEN smoother time constant in seconds");
    cmd->add_option("--pcen-eps", spec.pcen_eps, "PCEN epsilon");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fsed: few-shot bioacoustic sound event detection"};
    app.require_subcommand(1);

    // Collect raw args; an optional --config JSON file contributes defaults
    // that explicit flags override.
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        for (std::size_t i = 0; i + 1 < args.size(); ++i) {
            std::string config_path;
            if (args[i] == "--config")
                config_path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0)
                config_path = args[i].substr(9);
            if (!config_path.empty() && i >= 1) {
                const auto tokens = config_tokens(config_path);
                args.insert(args.begin() + 1, tokens.begin(), tokens.end());
                break;
            }
        }
    } catch (const fsed::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    ExtractArgs extract_args;
    TrainArgs train_args;
    DetectArgs detect_args;
    std::string score_pred, score_gt;
    double score_min_iou = 0.3;
    std::uint64_t verify_seed = 7;
    std::string config_file;
    int epochs_flag = -1;
    bool separation = false;

    auto* extract = app.add_subcommand("extract", "extract PCEN mel features from WAVs");
    extract->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    extract->add_option("--config", config_file, "JSON config file");
    extract->add_option("--audio-dir", extract_args.audio_dir, "directory of WAV files")
        ->required()
        ->check(CLI::ExistingDirectory);
    extract->add_option("--features-dir", extract_args.features_dir,
                        "output feature cache directory")
        ->required();
    add_spectrogram_options(extract, extract_args.spec);

    auto* train = app.add_subcommand("train", "train a prototypical embedding model");
    train->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    train->add_option("--config", config_file, "JSON config file");
    train->add_option("--features-dir", train_args.features_dir, "feature cache directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    train->add_option("--annotations", train_args.annotations,
                      "annotation CSV file(s) or directory")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    train->add_option("--checkpoint", train_args.checkpoint, "output checkpoint path");
    train->add_option("--report", train_args.report, "per-epoch JSON-lines report path");
    train->add_option("--kind", train_args.kind, "model kind")
        ->check(CLI::IsMember({"linear", "logistic", "ensemble"}));
    train->add_option("--out-dim", train_args.config.out_dim, "embedding dimension");
    train->add_option("--kernel", train_args.config.kernel_kind, "distance kernel")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, fsed::DistanceKernel::Kind>{
                {"euclidean", fsed::DistanceKernel::Kind::Euclidean},
                {"cholesky", fsed::DistanceKernel::Kind::CholeskyPD},
                {"rbf", fsed::DistanceKernel::Kind::Rbf}}));
    train->add_option("--gamma", train_args.config.gamma, "RBF gamma");
    train->add_flag("--separation", separation, "enable the prototype-separation loss");
    train->add_option("--lambda", train_args.config.loss.lambda, "separation weight");
    train->add_option("--delta-v", train_args.config.loss.delta_v, "separation margin");
    train->add_option("--epochs", epochs_flag, "training epochs");
    train->add_option("--lr", train_args.config.lr, "learning rate");
    train->add_option("--n-way", train_args.config.episode_spec.n_way, "classes per episode");
    train->add_option("--k-shot", train_args.config.episode_spec.k_shot,
                      "support patches per class");
    train->add_option("--n-query", train_args.config.episode_spec.n_query,
                      "query patches per class");
    train->add_option("--episodes-per-epoch", train_args.config.episodes_per_epoch,
                      "episodes per epoch (0 = derive from pool size)");
    train->add_option("--val-episodes", train_args.config.val_episodes,
                      "episodes per validation pass");
    train->add_option("--val-frac", train_args.val_frac, "held-out validation fraction");
    train->add_option("--patch-len", train_args.patch_len, "patch length in frames");
    train->add_option("--patch-hop", train_args.patch_hop, "patch stride in frames");
    train->add_option("--overlap-frac", train_args.overlap_frac,
                      "POS overlap fraction for labeling");
    train->add_option("--seed", train_args.config.seed, "random seed");

    auto* detect = app.add_subcommand("detect", "5-shot detection on one recording");
    detect->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    detect->add_option("--config", config_file, "JSON config file");
    detect->add_option("--checkpoint", detect_args.checkpoint, "model checkpoint")
        ->required();
    detect->add_option("--features", detect_args.features, "target recording feature file")
        ->required();
    detect->add_option("--annotations", detect_args.annotations,
                       "CSV with the recording's first 5 POS annotations")
        ->required();
    detect->add_option("--output", detect_args.output, "prediction CSV path");
    detect->add_option("--prob-threshold", detect_args.config.prob_threshold,
                       "positive probability threshold");
    detect->add_option("--patch-hop", detect_args.config.patch_hop,
                       "patch stride in frames");
    detect->add_option("--median-width", detect_args.config.median_filter_width,
                       "median filter width in patches (odd, 1 = off)");
    detect->add_option("--min-event-duration", detect_args.config.min_event_duration,
                       "drop events shorter than this many seconds");

    auto* score = app.add_subcommand("score", "score predictions against ground truth");
    score->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    score->add_option("--config", config_file, "JSON config file");
    score->add_option("--pred", score_pred, "prediction CSV")->required();
    score->add_option("--gt", score_gt, "ground-truth CSV")->required();
    score->add_option("--min-iou", score_min_iou, "IoU matching threshold");

    auto* verify = app.add_subcommand("verify", "run the built-in oracle suites");
    verify->add_option("--seed", verify_seed, "random seed");

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes reversed args
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (app.got_subcommand(extract)) return cmd_extract(extract_args);
        if (app.got_subcommand(train)) {
            train_args.config.loss.use_separation = separation;
            train_args.config.epochs = epochs_flag > 0 ? epochs_flag : (separation ? 30 : 15);
            if (train_args.config.kernel_kind == fsed::DistanceKernel::Kind::Rbf &&
                !(train_args.config.gamma > 0))
                throw UsageError("--gamma must be positive for the rbf kernel");
            if (!(train_args.config.lr > 0)) throw UsageError("--lr must be positive");
            if (!(train_args.val_frac > 0 && train_args.val_frac < 1))
                throw UsageError("--val-frac must lie in (0, 1)");
            return cmd_train(train_args);
        }
        if (app.got_subcommand(detect)) return cmd_detect(detect_args);
        if (app.got_subcommand(score)) return cmd_score(score_pred, score_gt, score_min_iou);
        if (app.got_subcommand(verify)) return cmd_verify(verify_seed);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const fsed::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const fsed::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
