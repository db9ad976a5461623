#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evoporo {

// C2 quintic smoothstep P(s) = 10s^3 - 15s^4 + 6s^5 on [0,1], clamped outside.
// P(0)=0, P(1)=1, P'(0)=P'(1)=P''(0)=P''(1)=0, max P' = 15/8 at s=1/2.
struct Smoothstep {
    double value;
    double deriv;
};

inline Smoothstep quintic_smoothstep(double s) {
    if (s <= 0.0) return {0.0, 0.0};
    if (s >= 1.0) return {1.0, 0.0};
    const double s2 = s * s;
    const double s3 = s2 * s;
    return {s3 * (10.0 - 15.0 * s + 6.0 * s2),
            30.0 * s2 * (1.0 - s) * (1.0 - s)};
}

// Left-to-right compensated (Kahan) accumulator for reproducible reductions.
class CompensatedSum {
public:
    void add(double v) {
        const double y = v - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

// FNV-1a over raw bytes; used to fingerprint meshes in table metadata.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);

// Shortest round-trip decimal formatting (std::to_chars).
std::string format_double(double v);

// Write-then-rename so partially written outputs are never observed.
void atomic_write_file(const std::string& path, const std::string& contents);

// Deterministic, platform-independent uniform generator for sweeps and tests.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

private:
    std::uint64_t state_;
};

} // namespace evoporo
