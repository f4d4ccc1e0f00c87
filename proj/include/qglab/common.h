// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qglab {

using i64 = std::int64_t;
using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---------------------------------------------------------------------------
// Error taxonomy; the CLI maps these onto exit codes.
// ---------------------------------------------------------------------------

// Input file missing / unreadable / unwritable.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A JSONL record violates its schema. Carries file and 1-based line number.
struct DataError : std::runtime_error {
    std::string file;
    std::int64_t line;
    DataError(std::string file_, std::int64_t line_, const std::string& msg)
        : std::runtime_error(file_ + ":" + std::to_string(line_) + ": " + msg),
          file(std::move(file_)),
          line(line_) {}
};

// Corrupted or incompatible binary/JSON artifact (checkpoint, vocabulary).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint parameter does not fit the model it is being loaded into.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 gives a standardized stream; the derived
// draws below are hand-rolled because the std distributions are
// implementation-defined.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n > 0. Rejection sampling keeps it unbiased.
    std::int64_t below(std::int64_t n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    // Standard normal via Box-Muller (no cached spare, one fresh pair per call).
    double gauss() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Normal(0, sigma) truncated to [-2 sigma, 2 sigma] by resampling.
    double truncated_normal(double sigma) {
        double x;
        do {
            x = gauss();
        } while (x < -2.0 || x > 2.0);
        return x * sigma;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            const std::int64_t j = below(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// FNV-1a 64-bit, used for artifact checksums in run manifests.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace qglab
