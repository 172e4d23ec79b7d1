#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace shadownet {

using Seed256 = std::array<std::uint8_t, 32>;

namespace detail {

// splitmix64 finalizer; full-period 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

// Deterministic counter-mode generator over a 256-bit seed. The same
// (seed, counter, index) triple yields the same 64-bit block on every
// platform. Statistically uniform but NOT a vetted cryptographic PRG;
// suitable for this simulation engine only.
class CounterPrg {
public:
    explicit CounterPrg(const Seed256& seed) {
        for (int w = 0; w < 4; ++w) {
            std::uint64_t k = 0;
            std::memcpy(&k, seed.data() + 8 * w, 8);
            key_[w] = detail::mix64(k + static_cast<std::uint64_t>(w));
        }
    }

    std::uint64_t block(std::uint64_t counter, std::uint64_t index) const {
        using detail::mix64;
        std::uint64_t h = key_[0];
        h = mix64(h ^ counter);
        h = mix64(h ^ key_[1]);
        h = mix64(h ^ index);
        h = mix64(h ^ key_[2]);
        return h ^ key_[3];
    }

private:
    std::array<std::uint64_t, 4> key_{};
};

// Expands a 64-bit seed into a full Seed256.
inline Seed256 seed_from_u64(std::uint64_t s) {
    Seed256 out{};
    for (int w = 0; w < 4; ++w) {
        std::uint64_t v = detail::mix64(s ^ (0x5bf03635ULL * (w + 1)));
        std::memcpy(out.data() + 8 * w, &v, 8);
    }
    return out;
}

// Derives an independent child seed via a domain-separation label.
inline Seed256 derive_seed(const Seed256& parent, std::string_view label) {
    std::uint64_t acc = 0x243f6a8885a308d3ULL;
    for (unsigned char c : label) acc = detail::mix64(acc ^ c);
    CounterPrg prg(parent);
    Seed256 out{};
    for (int w = 0; w < 4; ++w) {
        std::uint64_t v = prg.block(acc, static_cast<std::uint64_t>(w));
        std::memcpy(out.data() + 8 * w, &v, 8);
    }
    return out;
}

// Stateful stream view over CounterPrg: every next() consumes one index.
class RandomStream {
public:
    explicit RandomStream(const Seed256& seed) : prg_(seed) {}

    std::uint64_t next() { return prg_.block(0, index_++); }

    // Uniform double in [-0.5, 0.5) from the top 53 bits.
    double next_centered_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53 - 0.5;
    }

private:
    CounterPrg prg_;
    std::uint64_t index_ = 0;
};

} // namespace shadownet
