#pragma once

#include <cstdint>
#include <random>

namespace kbqa {

using Rng = std::mt19937_64;

inline double uniform(Rng& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline double gaussian(Rng& g, double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(g);
}

// inclusive bounds
inline int uniform_int(Rng& g, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(g);
}

inline std::size_t uniform_index(Rng& g, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(g);
}

}  // namespace kbqa
