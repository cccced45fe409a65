#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace transnar {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mix an arbitrary list of values into one seed. Used to derive independent
/// per-(purpose, task, size, index) streams from a single run seed.
inline uint64_t mix_seed(uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
inline uint64_t mix_seed(uint64_t seed, uint64_t next, Rest... rest) {
    return mix_seed(splitmix64(seed ^ (next + 0x9e3779b97f4a7c15ULL)), rest...);
}

inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Deterministic RNG: mt19937_64 engine (bit-portable per the standard) with
/// explicit value mappings so output does not depend on libstdc++'s
/// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal, Box-Muller with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [lo, hi] inclusive, by rejection.
    long randint(long lo, long hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return lo + static_cast<long>(x % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
            const long j = randint(0, i);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Uniform random k-subset of {0..n-1}, sorted ascending (Floyd's algorithm).
    std::vector<long> sorted_subset(long n, long k) {
        std::vector<long> out;
        out.reserve(static_cast<size_t>(k));
        std::vector<uint8_t> used(static_cast<size_t>(n), 0);
        for (long j = n - k; j < n; ++j) {
            const long t = randint(0, j);
            if (used[static_cast<size_t>(t)]) {
                used[static_cast<size_t>(j)] = 1;
                out.push_back(j);
            } else {
                used[static_cast<size_t>(t)] = 1;
                out.push_back(t);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::string state_str() const {
        std::ostringstream os;
        os << engine_ << " " << (has_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void restore_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        int flag = 0;
        is >> flag >> spare_;
        has_spare_ = flag != 0;
        if (is.fail()) throw std::runtime_error("Rng::restore_state: malformed state string");
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace transnar
