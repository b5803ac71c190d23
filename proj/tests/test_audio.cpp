#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "fsed/audio.hpp"
#include "fsed/errors.hpp"
#include "support/fixtures.hpp"

using namespace fsed;
using fixtures::TempDir;

namespace {

std::vector<double> sine(double freq, double seconds, int sr, double amp = 0.5) {
    std::vector<double> s(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / sr);
    return s;
}

}  // namespace

TEST_CASE("load_audio: digital silence stays silent") {
    TempDir dir("silence");
    fixtures::write_wav(dir.file("s.wav"), std::vector<double>(22050, 0.0), 22050);
    const AudioClip clip = load_audio(dir.file("s.wav"));
    CHECK(clip.sample_rate == 22050);
    CHECK(clip.samples.size() == 22050);
    for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("load_audio: opposite stereo channels cancel") {
    TempDir dir("stereo");
    std::vector<double> mono = sine(440.0, 0.1, 22050, 0.8);
    std::vector<double> interleaved;
    for (double s : mono) {
        interleaved.push_back(s);
        interleaved.push_back(-s);
    }
    fixtures::write_wav(dir.file("s.wav"), interleaved, 22050, 2);
    const AudioClip clip = load_audio(dir.file("s.wav"));
    REQUIRE(clip.samples.size() == mono.size());
    for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("load_audio: int16 rescaling matches a sample-by-sample oracle") {
    TempDir dir("scale");
    // Full-scale constant plus a few arbitrary values.
    std::vector<std::int16_t> raw = {32767, 32767, -32768, 1234, -1, 0, 20000};
    std::vector<double> norm;
    for (std::int16_t v : raw) norm.push_back(v / 32768.0);
    fixtures::write_wav(dir.file("s.wav"), norm, 22050);

    const AudioClip clip = load_audio(dir.file("s.wav"));
    REQUIRE(clip.samples.size() == raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double expected = (raw[i] / 32768.0) * 2147483648.0;
        CHECK(clip.samples[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(clip.samples[0] == doctest::Approx(32767.0 * 65536.0));
}

TEST_CASE("load_audio: resamples to 22050 Hz") {
    TempDir dir("resample");
    fixtures::write_wav(dir.file("s.wav"), std::vector<double>(44100, 0.25), 44100);
    const AudioClip clip = load_audio(dir.file("s.wav"));
    CHECK(clip.sample_rate == 22050);
    CHECK(clip.samples.size() == 22050);
    for (double s : clip.samples)
        CHECK(s == doctest::Approx(0.25 * 2147483648.0).epsilon(1e-3));
}

TEST_CASE("load_audio: corrupt and unsupported files") {
    TempDir dir("bad");
    {
        std::ofstream f(dir.file("corrupt.wav"), std::ios::binary);
        f << "RIFFxxnot-a-wav";
    }
    CHECK_THROWS_WITH_AS(load_audio(dir.file("corrupt.wav")),
                         doctest::Contains("corrupt.wav"), IngestionError);
    CHECK_THROWS_AS(load_audio(dir.file("missing.wav")), IngestionError);

    // A-law format tag (6) is not PCM.
    std::vector<unsigned char> alaw = {'R', 'I', 'F', 'F', 40, 0, 0, 0,
                                       'W', 'A', 'V', 'E', 'f', 'm', 't', ' ',
                                       16, 0, 0, 0};
    fixtures::append_u16(alaw, 6);
    fixtures::append_u16(alaw, 1);
    fixtures::append_u32(alaw, 22050);
    fixtures::append_u32(alaw, 22050);
    fixtures::append_u16(alaw, 1);
    fixtures::append_u16(alaw, 8);
    alaw.insert(alaw.end(), {'d', 'a', 't', 'a', 4, 0, 0, 0, 1, 2, 3, 4});
    {
        std::ofstream f(dir.file("alaw.wav"), std::ios::binary);
        f.write(reinterpret_cast<const char*>(alaw.data()),
                static_cast<std::streamsize>(alaw.size()));
    }
    CHECK_THROWS_AS(load_audio(dir.file("alaw.wav")), FormatError);
}

TEST_CASE("mel_spectrogram: frame count formula") {
    SpectrogramConfig cfg;
    AudioClip clip;
    clip.samples.assign(22050, 0.0);
    CHECK(mel_spectrogram(clip, cfg).rows() == 87);  // 1 + floor(22050/256)

    for (std::size_t n : {1u, 255u, 256u, 257u, 1024u, 5000u}) {
        clip.samples.assign(n, 0.0);
        CHECK(mel_spectrogram(clip, cfg).rows() ==
              static_cast<Eigen::Index>(1 + n / 256));
    }

    clip.samples.clear();
    CHECK_THROWS_AS(mel_spectrogram(clip, cfg), DataError);
}

TEST_CASE("mel_spectrogram: zero input gives a zero matrix") {
    SpectrogramConfig cfg;
    AudioClip clip;
    clip.samples.assign(4096, 0.0);
    const Eigen::MatrixXd mel = mel_spectrogram(clip, cfg);
    CHECK(mel.rows() == 17);
    CHECK(mel.cols() == 128);
    CHECK(mel.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mel_spectrogram: 1 kHz tone peaks in the nearest mel bin") {
    SpectrogramConfig cfg;
    AudioClip clip;
    clip.sample_rate = 22050;
    clip.samples = sine(1000.0, 0.5, 22050, 0.5);
    for (double& s : clip.samples) s *= 2147483648.0;

    const Eigen::MatrixXd mel = mel_spectrogram(clip, cfg);

    // Bin centers via the Slaney mel scale; find the one nearest 1 kHz.
    auto hz_to_mel = [](double f) {
        return f < 1000.0 ? f / (200.0 / 3.0)
                          : 15.0 + std::log(f / 1000.0) / (std::log(6.4) / 27.0);
    };
    auto mel_to_hz = [](double m) {
        return m < 15.0 ? m * (200.0 / 3.0)
                        : 1000.0 * std::exp((std::log(6.4) / 27.0) * (m - 15.0));
    };
    const double mel_max = hz_to_mel(22050.0 / 2.0);
    int nearest = 0;
    double best_gap = 1e18;
    for (int m = 0; m < 128; ++m) {
        const double center = mel_to_hz(mel_max * (m + 1) / 129.0);
        if (std::abs(center - 1000.0) < best_gap) {
            best_gap = std::abs(center - 1000.0);
            nearest = m;
        }
    }
    for (Eigen::Index t = 2; t + 2 < mel.rows(); ++t) {
        Eigen::Index argmax = 0;
        mel.row(t).maxCoeff(&argmax);
        CHECK(argmax == nearest);
    }
}

TEST_CASE("mel_spectrogram: FFT path matches a naive DFT oracle") {
    SpectrogramConfig cfg;
    AudioClip clip;
    fsed::Rng rng(11);
    clip.samples.resize(4000);
    for (double& s : clip.samples) s = rng.uniform(-1e6, 1e6);

    const Eigen::MatrixXd mel = mel_spectrogram(clip, cfg);
    const Eigen::MatrixXd fb = mel_filterbank(22050, cfg.n_fft, cfg.n_mels);

    // Recompute one interior frame end to end: reflect pad, Hann window,
    // direct O(n^2) DFT, filterbank projection.
    const int t = 7;
    const int n = static_cast<int>(clip.samples.size());
    const int pad = cfg.n_fft / 2;
    std::vector<double> frame(cfg.n_fft);
    for (int i = 0; i < cfg.n_fft; ++i) {
        int p = t * cfg.hop_length - pad + i;
        while (p < 0 || p >= n) {
            if (p < 0) p = -p;
            if (p >= n) p = 2 * (n - 1) - p;
        }
        const double w =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.n_fft);
        frame[static_cast<std::size_t>(i)] = clip.samples[static_cast<std::size_t>(p)] * w;
    }
    Eigen::VectorXd power(cfg.n_fft / 2 + 1);
    for (int k = 0; k <= cfg.n_fft / 2; ++k) {
        std::complex<double> acc(0, 0);
        for (int i = 0; i < cfg.n_fft; ++i) {
            const double ang = -2.0 * std::numbers::pi * k * i / cfg.n_fft;
            acc += frame[static_cast<std::size_t>(i)] *
                   std::complex<double>(std::cos(ang), std::sin(ang));
        }
        power(k) = std::norm(acc);
    }
    const Eigen::VectorXd expected = fb * power;
    for (int m = 0; m < cfg.n_mels; ++m)
        CHECK(mel(t, m) ==
              doctest::Approx(expected(m)).epsilon(1e-9).scale(expected.maxCoeff()));
}

TEST_CASE("pcen: zero input maps to zero") {
    SpectrogramConfig cfg;
    const MelPcenGram gram = pcen(Eigen::MatrixXd::Zero(40, 128), cfg);
    CHECK(gram.n_frames() == 40);
    CHECK(gram.frames.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("pcen: matches the scalar recurrence oracle") {
    SpectrogramConfig cfg;
    fsed::Rng rng(3);
    Eigen::MatrixXd mel(60, 4);
    for (Eigen::Index t = 0; t < mel.rows(); ++t)
        for (Eigen::Index f = 0; f < mel.cols(); ++f)
            mel(t, f) = rng.uniform(0.0, 50.0);
    // One constant band: its output must equal the closed form everywhere.
    const double E = 12.5;
    mel.col(3).setConstant(E);

    const MelPcenGram gram = pcen(mel, cfg);

    const double T = cfg.pcen_time_constant * 22050.0 / cfg.hop_length;
    const double s = (std::sqrt(1.0 + 4.0 * T * T) - 1.0) / (2.0 * T * T);
    for (Eigen::Index f = 0; f < mel.cols(); ++f) {
        double m = mel(0, f);
        for (Eigen::Index t = 0; t < mel.rows(); ++t) {
            if (t > 0) m = (1.0 - s) * m + s * mel(t, f);
            const double expected =
                std::pow(mel(t, f) / std::pow(cfg.pcen_eps + m, cfg.pcen_gain) +
                             cfg.pcen_bias,
                         cfg.pcen_power) -
                std::pow(cfg.pcen_bias, cfg.pcen_power);
            CHECK(gram.frames(t, f) == doctest::Approx(expected).epsilon(1e-6));
        }
    }
    const double closed =
        std::pow(E / std::pow(cfg.pcen_eps + E, cfg.pcen_gain) + cfg.pcen_bias,
                 cfg.pcen_power) -
        std::pow(cfg.pcen_bias, cfg.pcen_power);
    for (Eigen::Index t = 0; t < mel.rows(); ++t)
        CHECK(gram.frames(t, 3) == doctest::Approx(closed).epsilon(1e-6));
}

TEST_CASE("pcen: nonnegative outputs, monotone in the numerator") {
    SpectrogramConfig cfg;
    fsed::Rng rng(4);
    Eigen::MatrixXd mel(30, 8);
    for (Eigen::Index t = 0; t < mel.rows(); ++t)
        for (Eigen::Index f = 0; f < mel.cols(); ++f)
            mel(t, f) = rng.uniform(0.0, 100.0);

    const MelPcenGram gram = pcen(mel, cfg);
    CHECK(gram.frames.minCoeff() >= 0.0f);

    Eigen::MatrixXd bumped = mel;
    bumped(17, 2) += 25.0;
    const MelPcenGram gram2 = pcen(bumped, cfg);
    CHECK(gram2.frames(17, 2) >= gram.frames(17, 2));

    Eigen::MatrixXd bad = mel;
    bad(0, 0) = -1.0;
    CHECK_THROWS_AS(pcen(bad, cfg), DataError);
}

TEST_CASE("make_patches: counts, starts and zero padding") {
    MelPcenGram gram;
    gram.frames = Eigen::MatrixXf::Ones(17, 128);
    auto patches = make_patches(gram, 17, 8);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].start_frame == 0);

    gram.frames = Eigen::MatrixXf::Ones(34, 128);
    patches = make_patches(gram, 17, 8);
    REQUIRE(patches.size() == 3);
    CHECK(patches[0].start_frame == 0);
    CHECK(patches[1].start_frame == 8);
    CHECK(patches[2].start_frame == 16);

    gram.frames = Eigen::MatrixXf::Ones(5, 128);
    patches = make_patches(gram, 17, 8);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].values.topRows(5) == Eigen::MatrixXf::Ones(5, 128));
    CHECK(patches[0].values.bottomRows(12).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("patch flattening is a bijection") {
    fsed::Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Patch p;
        p.start_frame = static_cast<int>(rng.uniform_int(100));
        p.values.resize(17, 128);
        for (Eigen::Index f = 0; f < 17; ++f)
            for (Eigen::Index b = 0; b < 128; ++b)
                p.values(f, b) = static_cast<float>(rng.uniform(-5.0, 5.0));
        const Eigen::VectorXf flat = p.flatten();
        REQUIRE(flat.size() == 2176);
        CHECK(flat(1 * 128 + 3) == p.values(1, 3));  // row-major (frame, bin)
        const Patch back = Patch::unflatten(flat, 17, 128, p.start_frame);
        CHECK(back.values == p.values);
    }
}

TEST_CASE("feature extraction is deterministic and files round-trip") {
    TempDir dir("features");
    std::vector<double> samples = sine(700.0, 0.3, 22050, 0.4);
    fixtures::write_wav(dir.file("r.wav"), samples, 22050);

    SpectrogramConfig cfg;
    const AudioClip a = load_audio(dir.file("r.wav"));
    const AudioClip b = load_audio(dir.file("r.wav"));
    const MelPcenGram g1 = extract_features(a, cfg);
    const MelPcenGram g2 = extract_features(b, cfg);
    CHECK(g1.frames == g2.frames);  // bit-identical

    write_feature_file(dir.file("r.feat"), g1);
    const MelPcenGram loaded = read_feature_file(dir.file("r.feat"));
    CHECK(loaded.frames == g1.frames);
    CHECK(loaded.hop_length == g1.hop_length);
    CHECK(loaded.sample_rate == g1.sample_rate);
    CHECK(loaded.source_path == g1.source_path);

    // Truncated payload is rejected.
    {
        std::ifstream in(dir.file("r.feat"), std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
        std::ofstream out(dir.file("short.feat"), std::ios::binary);
        out.write(all.data(), static_cast<std::streamsize>(all.size() - 64));
    }
    CHECK_THROWS_AS(read_feature_file(dir.file("short.feat")), IngestionError);
}
