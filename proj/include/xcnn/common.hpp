// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xcnn {

// Error categories map 1:1 onto CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind { config = 2, data = 3, train = 4 };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    Kind kind_;
};

inline Error config_error(const std::string& msg) { return Error(Error::Kind::config, msg); }
inline Error data_error(const std::string& msg) { return Error(Error::Kind::data, msg); }
inline Error train_error(const std::string& msg) { return Error(Error::Kind::train, msg); }

// Half-away-from-zero rounding. Used for every width/channel computation so
// emitted topologies do not depend on the platform's default rounding mode.
inline int round_half_away(double x) {
    return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic stream seed derived from a base seed and a structural tag.
// Layer init, shuffles and dropout masks are all keyed this way so that a
// node keeps its init stream when it reappears in another topology.
inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
    return splitmix64(seed ^ fnv1a(tag));
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t index) {
    return splitmix64(mix_seed(seed, tag) + 0x632be59bd9b4e019ULL * (index + 1));
}

// mt19937_64 has a standardized output sequence; distributions do not, so
// uniform/normal draws are built from raw bits here.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t bits() { return gen_(); }

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; second value discarded to keep the stream position simple.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace xcnn
