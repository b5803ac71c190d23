#pragma once

// Shared helpers for the test suites: WAV writing, temp directories and
// synthetic corpus construction. Test-only code.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "fsed/corpus.hpp"
#include "fsed/rng.hpp"

namespace fixtures {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fsed_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void append_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void append_u16(std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>(v >> 8));
}

/// Writes a PCM WAV. channels holds interleaved frames when n_channels > 1.
/// bits: 16 or 32 (integer PCM) or 0 for IEEE float32.
inline void write_wav(const std::string& path, const std::vector<double>& interleaved,
                      int sample_rate, int n_channels = 1, int bits = 16) {
    const bool is_float = bits == 0;
    const int bytes = is_float ? 4 : bits / 8;
    std::vector<unsigned char> body;
    for (double s : interleaved) {
        if (is_float) {
            float f = static_cast<float>(s);
            unsigned char raw[4];
            std::memcpy(raw, &f, 4);
            body.insert(body.end(), raw, raw + 4);
        } else if (bits == 16) {
            double clamped = std::max(-1.0, std::min(s, 32767.0 / 32768.0));
            append_u16(body, static_cast<std::uint16_t>(
                                 static_cast<std::int16_t>(std::lround(clamped * 32768.0))));
        } else {  // 32-bit PCM
            double clamped = std::max(-1.0, std::min(s, 1.0));
            double scaled = clamped * 2147483648.0;
            if (scaled > 2147483647.0) scaled = 2147483647.0;
            append_u32(body, static_cast<std::uint32_t>(
                                 static_cast<std::int32_t>(std::llround(scaled))));
        }
    }

    std::vector<unsigned char> out;
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    append_u32(out, static_cast<std::uint32_t>(36 + body.size()));
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    append_u32(out, 16);
    append_u16(out, is_float ? 3 : 1);
    append_u16(out, static_cast<std::uint16_t>(n_channels));
    append_u32(out, static_cast<std::uint32_t>(sample_rate));
    append_u32(out, static_cast<std::uint32_t>(sample_rate * n_channels * bytes));
    append_u16(out, static_cast<std::uint16_t>(n_channels * bytes));
    append_u16(out, static_cast<std::uint16_t>(is_float ? 32 : bits));
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    append_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
}

/// A pool of well-separated synthetic patches: class c lives in its own
/// feature subspace, so a linear model can separate the classes.
inline std::vector<fsed::LabeledPatch> separable_pool(int n_classes, int per_class,
                                                      int dim, fsed::Rng& rng,
                                                      double noise = 0.05) {
    std::vector<fsed::LabeledPatch> pool;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            fsed::LabeledPatch p;
            p.class_id = c;
            p.features = Eigen::VectorXf::Zero(dim);
            for (int d = 0; d < dim; ++d)
                p.features(d) = static_cast<float>(noise * rng.uniform(-1.0, 1.0));
            p.features(c % dim) += 1.0f;
            pool.push_back(std::move(p));
        }
    }
    return pool;
}

/// Uniform random episode built directly from arrays (no pool).
inline fsed::Episode random_episode(fsed::Rng& rng, int n_way, int k_shot,
                                    int n_query, int dim) {
    fsed::Episode ep;
    ep.support_x.resize(n_way * k_shot, dim);
    ep.query_x.resize(n_way * n_query, dim);
    for (int k = 0; k < n_way; ++k) {
        ep.class_map.push_back(k);
        for (int i = 0; i < k_shot; ++i) ep.support_y.push_back(k);
        for (int i = 0; i < n_query; ++i) ep.query_y.push_back(k);
    }
    for (Eigen::Index r = 0; r < ep.support_x.rows(); ++r)
        for (int d = 0; d < dim; ++d) ep.support_x(r, d) = rng.uniform(-1.0, 1.0);
    for (Eigen::Index r = 0; r < ep.query_x.rows(); ++r)
        for (int d = 0; d < dim; ++d) ep.query_x(r, d) = rng.uniform(-1.0, 1.0);
    return ep;
}

}  // namespace fixtures
