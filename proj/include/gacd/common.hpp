#ifndef GACD_COMMON_HPP
#define GACD_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gacd {

// All numerics run in double; desk-scale models are small and the gradient
// and checkpoint contracts are easier to hold without mixed precision.
using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Image batches are stored flattened channel-major, one column per sample.
struct ImageShape {
    int channels = 0;
    int height = 0;
    int width = 0;
    int size() const { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent RNG from (seed, path...). Stateless streams keyed by
// epoch/batch/purpose make interrupted runs resume on the identical sequence.
inline std::mt19937_64 subrng(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = splitmix64(seed);
    for (uint64_t p : path) h = splitmix64(h ^ (p + 0x9e3779b97f4a7c15ull));
    return std::mt19937_64(h);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 14695981039346656037ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline uint64_t hash_matrix(const Matrix& m, uint64_t h = 14695981039346656037ull) {
    return fnv1a64(m.data(), sizeof(Scalar) * static_cast<size_t>(m.size()), h);
}

// log(1 + e^x) without overflow.
inline Scalar softplus(Scalar x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline Scalar sigmoid(Scalar x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace gacd

#endif  // GACD_COMMON_HPP
