#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace fsed {

/// A mono recording after ingestion: 22050 Hz, samples expressed in int32
/// full-scale counts (full-scale input maps to +-2^31).
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 22050;
    std::string source_path;
};

/// STFT / mel / PCEN parameters. Defaults follow the standard published PCEN
/// constants; fft and hop sizes are the pipeline's fixed working values.
struct SpectrogramConfig {
    int n_fft = 1024;
    int hop_length = 256;
    int n_mels = 128;
    double pcen_gain = 0.98;           // alpha
    double pcen_bias = 2.0;            // delta
    double pcen_power = 0.5;           // r
    double pcen_time_constant = 0.4;   // seconds
    double pcen_eps = 1e-6;

    void validate() const;  // throws DataError on a bad field
};

/// PCEN-normalised mel frames for one recording. Values are stored as float32
/// to match the on-disk feature format exactly.
struct MelPcenGram {
    Eigen::MatrixXf frames;  // n_frames x n_mels, entries >= 0
    int hop_length = 256;
    int sample_rate = 22050;
    std::string source_path;

    int n_frames() const { return static_cast<int>(frames.rows()); }
    int n_mels() const { return static_cast<int>(frames.cols()); }
    double frame_hop_seconds() const {
        return static_cast<double>(hop_length) / sample_rate;
    }
};

/// A fixed-size window of consecutive frames; the unit of model input.
struct Patch {
    Eigen::MatrixXf values;  // patch_len x n_mels
    int start_frame = 0;

    /// Row-major flattening over (frame, mel bin): a 17x128 patch becomes a
    /// 2176-vector with index frame * n_mels + bin.
    Eigen::VectorXf flatten() const;
    static Patch unflatten(const Eigen::VectorXf& flat, int patch_len,
                           int n_mels, int start_frame = 0);
};

/// Reads a PCM WAV file, averages channels to mono, resamples to 22050 Hz by
/// linear interpolation and rescales so full-scale input maps to +-2^31.
AudioClip load_audio(const std::string& path);

/// Hann-windowed power STFT (center padded, reflect mode) projected onto a
/// Slaney-normalised triangular mel filterbank spanning 0..sample_rate/2.
/// Result is n_frames x n_mels with n_frames = 1 + floor(N / hop_length).
Eigen::MatrixXd mel_spectrogram(const AudioClip& clip,
                                const SpectrogramConfig& config);

/// Per-band energy normalisation:
///   PCEN(t,f) = (E(t,f) / (eps + M(t,f))^alpha + delta)^r - delta^r
/// where M is the first-order IIR smoothing of E with coefficient
/// s = (sqrt(1 + 4 T^2) - 1) / (2 T^2), T = time_constant * sr / hop,
/// and M is initialised to the first frame.
MelPcenGram pcen(const Eigen::MatrixXd& mel, const SpectrogramConfig& config,
                 int sample_rate = 22050, std::string source_path = {});

/// load_audio -> mel_spectrogram -> pcen in one call.
MelPcenGram extract_features(const AudioClip& clip,
                             const SpectrogramConfig& config);

/// Patches start at frames 0, patch_hop, 2*patch_hop, ... subject to
/// start + patch_len <= n_frames. A gram shorter than one patch is
/// right-padded with zero frames and yields exactly one patch.
std::vector<Patch> make_patches(const MelPcenGram& gram, int patch_len = 17,
                                int patch_hop = 8);

/// Slaney-style triangular mel filterbank, n_mels x (n_fft/2 + 1).
Eigen::MatrixXd mel_filterbank(int sample_rate, int n_fft, int n_mels);

/// Feature file format: one JSON header line
/// {"hop_length","n_frames","n_mels","sample_rate","source_path"}, a single
/// '\n', then n_frames * n_mels row-major little-endian float32.
void write_feature_file(const std::string& path, const MelPcenGram& gram);
MelPcenGram read_feature_file(const std::string& path);

}  // namespace fsed
