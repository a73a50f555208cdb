#ifndef OCTSEG_COMMON_HPP
#define OCTSEG_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace octseg {

// Error taxonomy. The CLI maps these onto its stable exit codes, so new
// failure paths should reuse one of the existing categories.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error { using Error::Error; };          // bad declarative config
struct ArgumentError : Error { using Error::Error; };        // bad call argument
struct ValidationError : Error { using Error::Error; };      // data fails invariants
struct NotFoundError : Error { using Error::Error; };        // missing path / empty dataset
struct ShapeError : Error { using Error::Error; };           // tensor shape mismatch
struct LookupError : Error { using Error::Error; };          // unknown layer / field name
struct IoError : Error { using Error::Error; };              // read/write failure
struct CheckpointError : Error { using Error::Error; };      // checkpoint load/config mismatch

// Integer label grid shared by masks, predictions and error maps.
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> labels;  // row-major, height*width

    LabelMask() = default;
    LabelMask(int h, int w) : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    int64_t size() const { return static_cast<int64_t>(height) * width; }
    bool same_shape(const LabelMask& o) const { return height == o.height && width == o.width; }
};

// Deterministic 64-bit stream used for every seeded draw in the project.
// splitmix-initialized xorshift keeps the sequence stable across platforms,
// unlike std::distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix64 scramble so small seeds do not correlate
        state_ = seed + 0x9E3779B97F4A7C15ULL;
        state_ = (state_ ^ (state_ >> 30)) * 0xBF58476D1CE4E5B9ULL;
        state_ = (state_ ^ (state_ >> 27)) * 0x94D049BB133111EBULL;
        state_ ^= state_ >> 31;
        if (state_ == 0) state_ = 0x2545F4914F6CDD1DULL;
    }

    uint64_t next_u64() {
        uint64_t x = state_;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        state_ = x;
        return x;
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

// FNV-1a, used for dataset/artifact fingerprints in manifests and golden tests.
inline uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xCBF29CE484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string to_hex(uint64_t v);

}  // namespace octseg

#endif
