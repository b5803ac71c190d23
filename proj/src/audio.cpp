#include "fsed/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "fsed/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "feature/cache files assume a little-endian host");

namespace fsed {

namespace {

// ---------------------------------------------------------------------------
// WAV ingestion
// ---------------------------------------------------------------------------

constexpr double kFullScale = 2147483648.0;  // 2^31

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

struct WavFormat {
    std::uint16_t format = 0;  // 1 = PCM, 3 = IEEE float
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const WavFormat& fmt) {
    switch (fmt.bits) {
        case 8:  // unsigned
            return (static_cast<int>(p[0]) - 128) / 128.0;
        case 16: {
            std::int16_t v = static_cast<std::int16_t>(read_u16(p));
            return v / 32768.0;
        }
        case 24: {
            std::int32_t v = static_cast<std::int32_t>(
                (static_cast<std::uint32_t>(p[0]) << 8) |
                (static_cast<std::uint32_t>(p[1]) << 16) |
                (static_cast<std::uint32_t>(p[2]) << 24));
            return (v >> 8) / 8388608.0;
        }
        case 32:
            if (fmt.format == 3) {
                float f;
                std::memcpy(&f, p, 4);
                return f;
            } else {
                std::int32_t v = static_cast<std::int32_t>(read_u32(p));
                return v / kFullScale;
            }
        case 64: {
            double d;
            std::memcpy(&d, p, 8);
            return d;
        }
        default:
            throw FormatError("unsupported WAV bit depth: " + std::to_string(fmt.bits));
    }
}

std::vector<double> resample_linear(const std::vector<double>& x, int in_rate,
                                    int out_rate) {
    if (in_rate == out_rate || x.empty()) return x;
    const double ratio = static_cast<double>(out_rate) / in_rate;
    const std::size_t n_out =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(x.size() * ratio)));
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        double pos = static_cast<double>(i) / ratio;
        std::size_t i0 = std::min(static_cast<std::size_t>(pos), x.size() - 1);
        std::size_t i1 = std::min(i0 + 1, x.size() - 1);
        double frac = pos - static_cast<double>(i0);
        out[i] = (1.0 - frac) * x[i0] + frac * x[i1];
    }
    return out;
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void dft_naive(const std::vector<std::complex<double>>& in,
               std::vector<std::complex<double>>& out) {
    const std::size_t n = in.size();
    out.assign(n, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) /
                         static_cast<double>(n);
            acc += in[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
}

// Reflect-pad index (no edge repetition), matching numpy's "reflect" mode.
std::size_t reflect_index(std::ptrdiff_t p, std::size_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(n) - 2;
    std::ptrdiff_t q = p % period;
    if (q < 0) q += period;
    return static_cast<std::size_t>(q < static_cast<std::ptrdiff_t>(n) ? q : period - q);
}

double hz_to_mel(double f) {
    const double f_sp = 200.0 / 3.0;
    const double min_log_hz = 1000.0;
    const double logstep = std::log(6.4) / 27.0;
    if (f < min_log_hz) return f / f_sp;
    return min_log_hz / f_sp + std::log(f / min_log_hz) / logstep;
}

double mel_to_hz(double m) {
    const double f_sp = 200.0 / 3.0;
    const double min_log_mel = 15.0;  // 1000 Hz
    const double logstep = std::log(6.4) / 27.0;
    if (m < min_log_mel) return m * f_sp;
    return 1000.0 * std::exp(logstep * (m - min_log_mel));
}

}  // namespace

void SpectrogramConfig::validate() const {
    if (n_fft <= 0) throw DataError("n_fft must be positive");
    if (hop_length <= 0) throw DataError("hop_length must be positive");
    if (n_mels <= 0) throw DataError("n_mels must be positive");
    if (pcen_eps <= 0) throw DataError("pcen_eps must be positive");
    if (pcen_gain <= 0 || pcen_gain > 1) throw DataError("pcen_gain must be in (0, 1]");
    if (pcen_power <= 0) throw DataError("pcen_power must be positive");
    if (pcen_time_constant <= 0) throw DataError("pcen_time_constant must be positive");
    if (pcen_bias < 0) throw DataError("pcen_bias must be nonnegative");
}

AudioClip load_audio(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open audio file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw IngestionError("not a RIFF/WAVE file: " + path);

    WavFormat fmt;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        std::uint32_t size = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + size > bytes.size())
            throw IngestionError("truncated WAV chunk in: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw IngestionError("short fmt chunk in: " + path);
            const unsigned char* p = bytes.data() + pos;
            fmt.format = read_u16(p);
            fmt.channels = read_u16(p + 2);
            fmt.sample_rate = read_u32(p + 4);
            fmt.bits = read_u16(p + 14);
            if (fmt.format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE
                if (size < 40) throw IngestionError("short extensible fmt chunk in: " + path);
                fmt.format = read_u16(p + 24);  // first word of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_size = size;
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr)
        throw IngestionError("missing fmt/data chunk in: " + path);
    if (fmt.format != 1 && fmt.format != 3)
        throw FormatError("unsupported WAV encoding (format tag " +
                          std::to_string(fmt.format) + ") in: " + path);
    if (fmt.channels == 0 || fmt.sample_rate == 0)
        throw IngestionError("invalid fmt chunk in: " + path);
    if (fmt.format == 3 && fmt.bits != 32 && fmt.bits != 64)
        throw FormatError("unsupported float WAV bit depth in: " + path);
    if (fmt.format == 1 && fmt.bits != 8 && fmt.bits != 16 && fmt.bits != 24 && fmt.bits != 32)
        throw FormatError("unsupported PCM WAV bit depth in: " + path);

    const std::size_t bytes_per_sample = fmt.bits / 8;
    const std::size_t frame_size = bytes_per_sample * fmt.channels;
    const std::size_t n_frames = frame_size == 0 ? 0 : data_size / frame_size;

    std::vector<double> mono(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        double acc = 0;
        for (std::uint16_t c = 0; c < fmt.channels; ++c)
            acc += decode_sample(data + t * frame_size + c * bytes_per_sample, fmt);
        mono[t] = acc / fmt.channels;
    }

    AudioClip clip;
    clip.sample_rate = 22050;
    clip.source_path = path;
    mono = resample_linear(mono, static_cast<int>(fmt.sample_rate), clip.sample_rate);
    clip.samples.resize(mono.size());
    for (std::size_t i = 0; i < mono.size(); ++i) clip.samples[i] = mono[i] * kFullScale;
    return clip;
}

Eigen::MatrixXd mel_filterbank(int sample_rate, int n_fft, int n_mels) {
    const int n_freq = n_fft / 2 + 1;
    const double fmax = sample_rate / 2.0;

    std::vector<double> pts(n_mels + 2);
    const double mel_max = hz_to_mel(fmax);
    for (int i = 0; i < n_mels + 2; ++i)
        pts[i] = mel_to_hz(mel_max * i / static_cast<double>(n_mels + 1));

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n_mels, n_freq);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
        const double enorm = 2.0 / (hi - lo);  // Slaney area normalisation
        for (int k = 0; k < n_freq; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            const double up = (f - lo) / (mid - lo);
            const double down = (hi - f) / (hi - mid);
            const double w = std::max(0.0, std::min(up, down));
            weights(m, k) = w * enorm;
        }
    }
    return weights;
}

Eigen::MatrixXd mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& config) {
    config.validate();
    const std::size_t n = clip.samples.size();
    if (n == 0) throw DataError("empty clip: " + clip.source_path);

    const int n_fft = config.n_fft;
    const int hop = config.hop_length;
    const int n_freq = n_fft / 2 + 1;
    const std::size_t n_frames = 1 + n / static_cast<std::size_t>(hop);

    std::vector<double> window(n_fft);
    for (int i = 0; i < n_fft; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);

    const Eigen::MatrixXd fb = mel_filterbank(clip.sample_rate, n_fft, config.n_mels);
    Eigen::MatrixXd mel(n_frames, config.n_mels);

    const std::ptrdiff_t pad = n_fft / 2;
    const bool pow2 = is_pow2(static_cast<std::size_t>(n_fft));
    std::vector<std::complex<double>> buf(n_fft), out(n_fft);
    Eigen::VectorXd power(n_freq);

    // Frames are processed in blocks so the power spectra can be projected
    // onto the filterbank with one matrix product per block.
    const std::size_t block = 2048;
    Eigen::MatrixXd pblock(block, n_freq);
    for (std::size_t t0 = 0; t0 < n_frames; t0 += block) {
        const std::size_t rows = std::min(block, n_frames - t0);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::ptrdiff_t frame_start =
                static_cast<std::ptrdiff_t>((t0 + r) * hop) - pad;
            for (int i = 0; i < n_fft; ++i) {
                const std::ptrdiff_t p = frame_start + i;
                const double s = (p >= 0 && p < static_cast<std::ptrdiff_t>(n))
                                     ? clip.samples[static_cast<std::size_t>(p)]
                                     : clip.samples[reflect_index(p, n)];
                buf[i] = {s * window[i], 0.0};
            }
            if (pow2) {
                out = buf;
                fft_radix2(out);
            } else {
                dft_naive(buf, out);
            }
            for (int k = 0; k < n_freq; ++k) pblock(r, k) = std::norm(out[k]);
        }
        mel.middleRows(t0, rows).noalias() = pblock.topRows(rows) * fb.transpose();
    }
    return mel;
}

MelPcenGram pcen(const Eigen::MatrixXd& mel, const SpectrogramConfig& config,
                 int sample_rate, std::string source_path) {
    config.validate();
    if ((mel.array() < 0.0).any())
        throw DataError("pcen input must be nonnegative");

    const double T = config.pcen_time_constant * sample_rate / config.hop_length;
    const double s = (std::sqrt(1.0 + 4.0 * T * T) - 1.0) / (2.0 * T * T);
    const double alpha = config.pcen_gain;
    const double delta = config.pcen_bias;
    const double r = config.pcen_power;
    const double eps = config.pcen_eps;
    const double delta_r = std::pow(delta, r);

    MelPcenGram gram;
    gram.hop_length = config.hop_length;
    gram.sample_rate = sample_rate;
    gram.source_path = std::move(source_path);
    gram.frames.resize(mel.rows(), mel.cols());
    if (mel.rows() == 0) return gram;

    Eigen::VectorXd smoother = mel.row(0);  // M initialised to the first frame
    for (Eigen::Index t = 0; t < mel.rows(); ++t) {
        if (t > 0) smoother = (1.0 - s) * smoother + s * mel.row(t).transpose();
        for (Eigen::Index f = 0; f < mel.cols(); ++f) {
            const double gain = std::pow(eps + smoother(f), alpha);
            const double v = std::pow(mel(t, f) / gain + delta, r) - delta_r;
            gram.frames(t, f) = static_cast<float>(v);
        }
    }
    return gram;
}

MelPcenGram extract_features(const AudioClip& clip, const SpectrogramConfig& config) {
    MelPcenGram gram = pcen(mel_spectrogram(clip, config), config, clip.sample_rate,
                            clip.source_path);
    return gram;
}

Eigen::VectorXf Patch::flatten() const {
    Eigen::VectorXf flat(values.size());
    Eigen::Index idx = 0;
    for (Eigen::Index f = 0; f < values.rows(); ++f)
        for (Eigen::Index b = 0; b < values.cols(); ++b) flat(idx++) = values(f, b);
    return flat;
}

Patch Patch::unflatten(const Eigen::VectorXf& flat, int patch_len, int n_mels,
                       int start_frame) {
    if (flat.size() != static_cast<Eigen::Index>(patch_len) * n_mels)
        throw DataError("flattened patch has wrong length");
    Patch p;
    p.start_frame = start_frame;
    p.values.resize(patch_len, n_mels);
    Eigen::Index idx = 0;
    for (int f = 0; f < patch_len; ++f)
        for (int b = 0; b < n_mels; ++b) p.values(f, b) = flat(idx++);
    return p;
}

std::vector<Patch> make_patches(const MelPcenGram& gram, int patch_len, int patch_hop) {
    if (patch_len < 1) throw DataError("patch_len must be >= 1");
    if (patch_hop < 1) throw DataError("patch_hop must be >= 1");

    const int n_frames = gram.n_frames();
    const int n_mels = gram.n_mels();
    std::vector<Patch> patches;

    if (n_frames < patch_len) {
        Patch p;
        p.start_frame = 0;
        p.values = Eigen::MatrixXf::Zero(patch_len, n_mels);
        p.values.topRows(n_frames) = gram.frames;
        patches.push_back(std::move(p));
        return patches;
    }
    for (int start = 0; start + patch_len <= n_frames; start += patch_hop) {
        Patch p;
        p.start_frame = start;
        p.values = gram.frames.middleRows(start, patch_len);
        patches.push_back(std::move(p));
    }
    return patches;
}

void write_feature_file(const std::string& path, const MelPcenGram& gram) {
    nlohmann::json header = {
        {"hop_length", gram.hop_length},
        {"n_frames", gram.n_frames()},
        {"n_mels", gram.n_mels()},
        {"sample_rate", gram.sample_rate},
        {"source_path", gram.source_path},
    };
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write feature file: " + path);
    out << header.dump() << '\n';
    for (int t = 0; t < gram.n_frames(); ++t)
        for (int f = 0; f < gram.n_mels(); ++f) {
            float v = gram.frames(t, f);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    if (!out) throw IngestionError("failed writing feature file: " + path);
}

MelPcenGram read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open feature file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("empty feature file: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad feature header in " + path + ": " + e.what());
    }

    MelPcenGram gram;
    try {
        gram.hop_length = header.at("hop_length").get<int>();
        gram.sample_rate = header.at("sample_rate").get<int>();
        gram.source_path = header.at("source_path").get<std::string>();
        const int n_frames = header.at("n_frames").get<int>();
        const int n_mels = header.at("n_mels").get<int>();
        if (n_frames < 0 || n_mels <= 0) throw FormatError("bad feature dims in " + path);
        gram.frames.resize(n_frames, n_mels);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad feature header in " + path + ": " + e.what());
    }

    for (int t = 0; t < gram.n_frames(); ++t)
        for (int f = 0; f < gram.n_mels(); ++f) {
            float v;
            if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
                throw IngestionError("truncated feature payload in: " + path);
            gram.frames(t, f) = v;
        }
    return gram;
}

}  // namespace fsed
