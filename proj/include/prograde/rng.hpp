#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace prograde {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that every stream is
// bit-reproducible across platforms and standard library versions; streams
// are cheap to fork by name so each consumer (latents, dataset order, fade
// interpolation, ...) owns an independent substream.
class Rng {
  public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t hash_name(std::string_view name) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    /// Independent stream derived from this one; does not advance *this.
    Rng substream(std::string_view name) const {
        std::uint64_t x = state_[0] ^ (state_[2] * 0x9e3779b97f4a7c15ULL) ^ hash_name(name);
        return Rng(splitmix64(x));
    }

    Rng substream(std::uint64_t key) const {
        std::uint64_t x = state_[0] ^ (state_[2] * 0x9e3779b97f4a7c15ULL) ^ (key * 0xd1342543de82ef95ULL + 1);
        return Rng(splitmix64(x));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    bool coin() { return (next_u64() >> 63) != 0; }

    /// Standard normal via Box-Muller. No cached spare: state stays two
    /// plain words per draw pair, which keeps checkpointing trivial.
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::array<std::uint64_t, 4> serialize() const { return state_; }
    void deserialize(const std::array<std::uint64_t, 4>& s) { state_ = s; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace prograde
