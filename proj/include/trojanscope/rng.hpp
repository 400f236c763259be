#pragma once

#include <cstdint>
#include <vector>

namespace trojanscope {

// All randomness in the toolkit funnels through one master seed, fanned out
// into independent streams with a counter-based split (splitmix64 mixing of
// the seed and a stream path). Distribution mapping is done by hand so runs
// reproduce bit-for-bit regardless of the standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // splitmix64 (Steele, Lea, Flood 2014)
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives a child seed for an independent stream. Path components are
    // small fixed tags (stream ids, slot indices), never data-dependent.
    static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t s = mix(seed ^ 0x6a09e667f3bcc909ULL);
        s = mix(s ^ a);
        s = mix(s ^ b);
        s = mix(s ^ c);
        return s;
    }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return z ^ (z >> 33);
    }

    uint64_t state_;
};

// Stream tags for Rng::derive. Keeping them in one place avoids collisions.
namespace streams {
inline constexpr uint64_t kWeightInit = 1;
inline constexpr uint64_t kShuffle = 2;
inline constexpr uint64_t kSynthData = 3;
inline constexpr uint64_t kPoisonPick = 4;
inline constexpr uint64_t kTriggerStamp = 5;
inline constexpr uint64_t kTriggerPattern = 6;
inline constexpr uint64_t kNoise = 7;
inline constexpr uint64_t kZooClean = 8;
inline constexpr uint64_t kZooTrojan = 9;
inline constexpr uint64_t kDetectorProbe = 10;
inline constexpr uint64_t kSplit = 11;
}  // namespace streams

}  // namespace trojanscope
