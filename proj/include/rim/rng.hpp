#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rim {

// One master seed spawns independent per-component streams by label, so
// adding a consumer does not shift the draws of existing ones.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 stream(std::uint64_t master_seed, std::string_view label) {
    return std::mt19937_64(splitmix64(master_seed ^ fnv1a(label)));
}

inline std::mt19937_64 stream(std::uint64_t master_seed, std::string_view label, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(master_seed ^ fnv1a(label)) + index));
}

}  // namespace rim
