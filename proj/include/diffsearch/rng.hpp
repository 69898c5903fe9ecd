#pragma once

#include <cmath>
#include <cstdint>
#include <Eigen/Dense>

namespace diffsearch {

// Counter-based splittable RNG. A stream is (key, counter); draws are a pure
// function of both, so particles can be advanced in any order on any number
// of workers and still replay bit-identically.
class RngStream {
public:
    explicit RngStream(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void reset_counter(std::uint64_t c = 0) { counter_ = c; }

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0,1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    Eigen::VectorXd normal_vec(int d) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v[i] = normal();
        return v;
    }

    // Derive an independent stream; deterministic in (parent key, salt).
    RngStream child(std::uint64_t salt) const {
        std::uint64_t z = key_ ^ (salt + 0x632BE59BD9B4E019ULL) * 0xD6E8FEB86659FD93ULL;
        z = (z ^ (z >> 32)) * 0xD6E8FEB86659FD93ULL;
        z = (z ^ (z >> 32)) * 0xD6E8FEB86659FD93ULL;
        return RngStream(z ^ (z >> 32));
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace diffsearch
