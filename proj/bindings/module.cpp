// fewshot_sed._core: python bindings for the main operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsed/audio.hpp"
#include "fsed/corpus.hpp"
#include "fsed/detector.hpp"
#include "fsed/errors.hpp"
#include "fsed/evaluator.hpp"
#include "fsed/objective.hpp"
#include "fsed/trainer.hpp"
#include "fsed/verify.hpp"

namespace py = pybind11;
using namespace fsed;

namespace {

SpectrogramConfig spectrogram_config(int n_fft, int hop_length, int n_mels,
                                     double gain, double bias, double power,
                                     double time_constant, double eps) {
    SpectrogramConfig cfg;
    cfg.n_fft = n_fft;
    cfg.hop_length = hop_length;
    cfg.n_mels = n_mels;
    cfg.pcen_gain = gain;
    cfg.pcen_bias = bias;
    cfg.pcen_power = power;
    cfg.pcen_time_constant = time_constant;
    cfg.pcen_eps = eps;
    return cfg;
}

Episode episode_from_arrays(const Eigen::MatrixXd& support_x,
                            const std::vector<int>& support_y,
                            const Eigen::MatrixXd& query_x,
                            const std::vector<int>& query_y) {
    Episode ep;
    ep.support_x = support_x;
    ep.support_y = support_y;
    ep.query_x = query_x;
    ep.query_y = query_y;
    int n_way = 0;
    for (int y : support_y) n_way = std::max(n_way, y + 1);
    for (int k = 0; k < n_way; ++k) ep.class_map.push_back(k);
    return ep;
}

LossConfig loss_config(bool use_separation, double lambda, double delta_v) {
    LossConfig cfg;
    cfg.use_separation = use_separation;
    cfg.lambda = lambda;
    cfg.delta_v = delta_v;
    return cfg;
}

std::vector<Interval> to_intervals(const Eigen::MatrixXd& rows) {
    if (rows.size() > 0 && rows.cols() != 2)
        throw DataError("interval array must have shape (n, 2)");
    std::vector<Interval> out;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back({rows(i, 0), rows(i, 1)});
    return out;
}

std::vector<LabeledPatch> pool_from_arrays(const Eigen::MatrixXf& features,
                                           const std::vector<int>& class_ids) {
    if (features.rows() != static_cast<Eigen::Index>(class_ids.size()))
        throw DataError("features and class_ids must have equal length");
    std::vector<LabeledPatch> pool(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        pool[static_cast<std::size_t>(i)].features = features.row(i);
        pool[static_cast<std::size_t>(i)].class_id =
            class_ids[static_cast<std::size_t>(i)];
    }
    return pool;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Few-shot bioacoustic sound event detection core";

    py::register_exception<Error>(m, "Error");

    // -- features ------------------------------------------------------------

    m.def(
        "load_audio",
        [](const std::string& path) {
            const AudioClip clip = load_audio(path);
            return py::make_tuple(clip.samples, clip.sample_rate);
        },
        py::arg("path"),
        "Reads a PCM WAV: mono average, 22050 Hz, int32 full-scale units.");

    m.def(
        "mel_spectrogram",
        [](const Eigen::VectorXd& samples, int n_fft, int hop_length, int n_mels) {
            AudioClip clip;
            clip.samples.assign(samples.data(), samples.data() + samples.size());
            SpectrogramConfig cfg;
            cfg.n_fft = n_fft;
            cfg.hop_length = hop_length;
            cfg.n_mels = n_mels;
            return mel_spectrogram(clip, cfg);
        },
        py::arg("samples"), py::arg("n_fft") = 1024, py::arg("hop_length") = 256,
        py::arg("n_mels") = 128);

    m.def(
        "pcen",
        [](const Eigen::MatrixXd& mel, int n_fft, int hop_length, int n_mels,
           double gain, double bias, double power, double time_constant, double eps) {
            return pcen(mel,
                        spectrogram_config(n_fft, hop_length, n_mels, gain, bias,
                                           power, time_constant, eps))
                .frames;
        },
        py::arg("mel"), py::arg("n_fft") = 1024, py::arg("hop_length") = 256,
        py::arg("n_mels") = 128, py::arg("gain") = 0.98, py::arg("bias") = 2.0,
        py::arg("power") = 0.5, py::arg("time_constant") = 0.4, py::arg("eps") = 1e-6);

    m.def(
        "make_patches",
        [](const Eigen::MatrixXf& frames, int patch_len, int patch_hop) {
            MelPcenGram gram;
            gram.frames = frames;
            const auto patches = make_patches(gram, patch_len, patch_hop);
            Eigen::MatrixXf flat(patches.size(), patch_len * frames.cols());
            std::vector<int> starts;
            for (std::size_t i = 0; i < patches.size(); ++i) {
                flat.row(static_cast<Eigen::Index>(i)) = patches[i].flatten();
                starts.push_back(patches[i].start_frame);
            }
            return py::make_tuple(flat, starts);
        },
        py::arg("frames"), py::arg("patch_len") = 17, py::arg("patch_hop") = 8,
        "Returns (flattened patches, start frames).");

    m.def("mel_filterbank", &mel_filterbank, py::arg("sample_rate") = 22050,
          py::arg("n_fft") = 1024, py::arg("n_mels") = 128);

    // -- model ---------------------------------------------------------------

    py::class_<EmbeddingModel>(m, "EmbeddingModel")
        .def_readwrite("A", &EmbeddingModel::A)
        .def_property_readonly("kind",
                               [](const EmbeddingModel& mdl) {
                                   return std::string(to_string(mdl.kind));
                               })
        .def_property_readonly("out_dim", &EmbeddingModel::out_dim)
        .def_property_readonly("in_dim", &EmbeddingModel::in_dim);

    py::class_<DistanceKernel>(m, "DistanceKernel")
        .def_property_readonly("variant",
                               [](const DistanceKernel& k) {
                                   return std::string(to_string(k.kind));
                               })
        .def_readwrite("L", &DistanceKernel::L)
        .def_readwrite("gamma", &DistanceKernel::gamma);

    m.def(
        "init_model",
        [](const std::string& kind, int out_dim, int in_dim, std::uint64_t seed) {
            Rng rng = Rng(seed).child("init");
            return init_model(model_kind_from_string(kind), out_dim, in_dim, rng);
        },
        py::arg("kind"), py::arg("out_dim"), py::arg("in_dim"), py::arg("seed") = 0);

    m.def("embed", &embed, py::arg("model"), py::arg("x"));
    m.def("embed_batch", &embed_batch, py::arg("model"), py::arg("X"));

    m.def("euclidean_kernel", &DistanceKernel::euclidean);
    m.def("cholesky_kernel",
          py::overload_cast<const Eigen::MatrixXd&>(&DistanceKernel::cholesky_pd),
          py::arg("L"));
    m.def("rbf_kernel", &DistanceKernel::rbf, py::arg("gamma"));

    // -- objective -----------------------------------------------------------

    m.def("compute_prototypes", &compute_prototypes, py::arg("embeddings"),
          py::arg("labels"), py::arg("n_way"));
    m.def("squared_distance", &squared_distance, py::arg("kernel"), py::arg("x"),
          py::arg("y"));
    m.def("pairwise_squared_distances", &pairwise_squared_distances,
          py::arg("kernel"), py::arg("X"), py::arg("Y"));
    m.def("class_probabilities", &class_probabilities, py::arg("dists"));
    m.def("prototypical_loss", &prototypical_loss, py::arg("probs"),
          py::arg("labels"));
    m.def(
        "separation_penalty",
        [](const Eigen::MatrixXd& protos, double lambda, double delta_v) {
            return separation_penalty(protos, loss_config(true, lambda, delta_v));
        },
        py::arg("prototypes"), py::arg("lambda_") = 0.1, py::arg("delta_v") = 10.0);
    m.def("project_cholesky", &project_cholesky, py::arg("L"));

    m.def(
        "episode_loss",
        [](const EmbeddingModel& model, const DistanceKernel& kernel,
           const Eigen::MatrixXd& support_x, const std::vector<int>& support_y,
           const Eigen::MatrixXd& query_x, const std::vector<int>& query_y,
           bool use_separation, double lambda, double delta_v) {
            return episode_loss(model, kernel,
                                episode_from_arrays(support_x, support_y, query_x,
                                                    query_y),
                                loss_config(use_separation, lambda, delta_v));
        },
        py::arg("model"), py::arg("kernel"), py::arg("support_x"),
        py::arg("support_y"), py::arg("query_x"), py::arg("query_y"),
        py::arg("use_separation") = false, py::arg("lambda_") = 0.1,
        py::arg("delta_v") = 10.0);

    m.def(
        "episode_gradients",
        [](const EmbeddingModel& model, const DistanceKernel& kernel,
           const Eigen::MatrixXd& support_x, const std::vector<int>& support_y,
           const Eigen::MatrixXd& query_x, const std::vector<int>& query_y,
           bool use_separation, double lambda, double delta_v) {
            const auto [loss, grads] = episode_gradients(
                model, kernel,
                episode_from_arrays(support_x, support_y, query_x, query_y),
                loss_config(use_separation, lambda, delta_v));
            return py::make_tuple(loss, grads.dA,
                                  grads.has_dL() ? py::cast(grads.dL)
                                                 : py::object(py::none()));
        },
        py::arg("model"), py::arg("kernel"), py::arg("support_x"),
        py::arg("support_y"), py::arg("query_x"), py::arg("query_y"),
        py::arg("use_separation") = false, py::arg("lambda_") = 0.1,
        py::arg("delta_v") = 10.0);

    m.def(
        "finite_diff_gradients",
        [](const EmbeddingModel& model, const DistanceKernel& kernel,
           const Eigen::MatrixXd& support_x, const std::vector<int>& support_y,
           const Eigen::MatrixXd& query_x, const std::vector<int>& query_y,
           bool use_separation, double lambda, double delta_v, double h) {
            const Gradients grads = finite_diff_gradients(
                model, kernel,
                episode_from_arrays(support_x, support_y, query_x, query_y),
                loss_config(use_separation, lambda, delta_v), h);
            return py::make_tuple(grads.dA, grads.has_dL()
                                                ? py::cast(grads.dL)
                                                : py::object(py::none()));
        },
        py::arg("model"), py::arg("kernel"), py::arg("support_x"),
        py::arg("support_y"), py::arg("query_x"), py::arg("query_y"),
        py::arg("use_separation") = false, py::arg("lambda_") = 0.1,
        py::arg("delta_v") = 10.0, py::arg("h") = 1e-5);

    // -- training ------------------------------------------------------------

    m.def(
        "train",
        [](const Eigen::MatrixXf& train_x, const std::vector<int>& train_y,
           const Eigen::MatrixXf& val_x, const std::vector<int>& val_y,
           const std::string& kind, int out_dim, const std::string& kernel, double gamma,
           int epochs, double lr, int n_way, int k_shot, int n_query,
           int episodes_per_epoch, int val_episodes, bool use_separation,
           double lambda, double delta_v, std::uint64_t seed) {
            TrainConfig cfg;
            cfg.model_kind = model_kind_from_string(kind);
            cfg.out_dim = out_dim;
            cfg.kernel_kind = kernel_kind_from_string(kernel);
            cfg.gamma = gamma;
            cfg.epochs = epochs;
            cfg.lr = lr;
            cfg.episode_spec = {n_way, k_shot, n_query};
            cfg.episodes_per_epoch = episodes_per_epoch;
            cfg.val_episodes = val_episodes;
            cfg.loss = loss_config(use_separation, lambda, delta_v);
            cfg.seed = seed;
            TrainResult r = train(pool_from_arrays(train_x, train_y),
                                  pool_from_arrays(val_x, val_y), cfg);
            return py::make_tuple(r.model, r.kernel, r.report.to_json_lines(),
                                  r.report.final_val_accuracy);
        },
        py::arg("train_x"), py::arg("train_y"), py::arg("val_x"), py::arg("val_y"),
        py::arg("kind") = "logistic", py::arg("out_dim") = 256,
        py::arg("kernel") = "euclidean", py::arg("gamma") = 0.1,
        py::arg("epochs") = 15, py::arg("lr") = 0.0001, py::arg("n_way") = 10,
        py::arg("k_shot") = 5, py::arg("n_query") = 5,
        py::arg("episodes_per_epoch") = 0, py::arg("val_episodes") = 100,
        py::arg("use_separation") = false, py::arg("lambda_") = 0.1,
        py::arg("delta_v") = 10.0, py::arg("seed") = 0);

    m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("kernel"),
          py::arg("path"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    // -- evaluation ----------------------------------------------------------

    m.def(
        "iou",
        [](double a_start, double a_end, double b_start, double b_end) {
            return iou({a_start, a_end}, {b_start, b_end});
        },
        py::arg("a_start"), py::arg("a_end"), py::arg("b_start"), py::arg("b_end"));

    m.def(
        "remove_unk",
        [](const Eigen::MatrixXd& preds, const Eigen::MatrixXd& unk) {
            const auto kept = remove_unk(to_intervals(preds), to_intervals(unk));
            Eigen::MatrixXd out(kept.size(), 2);
            for (std::size_t i = 0; i < kept.size(); ++i) {
                out(static_cast<Eigen::Index>(i), 0) = kept[i].start;
                out(static_cast<Eigen::Index>(i), 1) = kept[i].end;
            }
            return out;
        },
        py::arg("preds"), py::arg("unk"));

    m.def(
        "match_events",
        [](const Eigen::MatrixXd& preds, const Eigen::MatrixXd& gts, double min_iou) {
            const MatchResult r = match_events(to_intervals(preds), to_intervals(gts),
                                               min_iou);
            py::dict out;
            out["pairs"] = r.pairs;
            out["tp"] = r.tp;
            out["fp"] = r.fp;
            out["fn"] = r.fn;
            return out;
        },
        py::arg("preds"), py::arg("gts"), py::arg("min_iou") = 0.3);

    m.def(
        "compute_metrics",
        [](long tp, long fp, long fn) {
            const Metrics mt = compute_metrics(tp, fp, fn);
            py::dict out;
            out["precision"] = mt.precision;
            out["recall"] = mt.recall;
            out["fscore"] = mt.fscore;
            return out;
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"));

    m.def(
        "score_csv",
        [](const std::string& pred_csv, const std::string& gt_csv, double min_iou) {
            return score_file(pred_csv, gt_csv, min_iou).to_json().dump();
        },
        py::arg("pred_csv"), py::arg("gt_csv"), py::arg("min_iou") = 0.3,
        "Scores prediction CSV text against ground-truth CSV text; returns JSON.");

    m.def(
        "verify",
        [](std::uint64_t seed) {
            VerifyOptions opt;
            opt.seed = seed;
            py::list out;
            for (const SuiteResult& r : run_verification(opt)) {
                py::dict item;
                item["name"] = r.name;
                item["passed"] = r.passed;
                item["detail"] = r.detail;
                out.append(item);
            }
            return out;
        },
        py::arg("seed") = 7, "Runs the built-in oracle suites.");
}
