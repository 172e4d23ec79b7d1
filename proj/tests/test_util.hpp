#pragma once

#include <cstdint>
#include <vector>

#include "shadownet/sharing.hpp"
#include "shadownet/transport.hpp"

namespace shadownet::testutil {

inline Session make_session(std::uint64_t seed = 1) {
    return Session::open_in_process(seed_from_u64(seed));
}

// Shares raw ring words through a throwaway deterministic stream.
inline SharePair share_raw(const Ring& ring, const std::vector<std::uint64_t>& words,
                           std::uint64_t seed = 99) {
    RingTensor t({words.size()});
    for (std::size_t i = 0; i < words.size(); ++i) t.data[i] = ring.reduce(words[i]);
    RandomStream rng(seed_from_u64(seed));
    return share(ring, t, rng);
}

// Signed interpretation independent of Ring::to_signed: fold into
// [-2^(l-1), 2^(l-1)) by hand.
inline std::int64_t signed_of(unsigned bits, std::uint64_t v) {
    const std::uint64_t half = 1ULL << (bits - 1);
    const std::uint64_t mask = bits == 64 ? ~0ULL : (1ULL << bits) - 1;
    v &= mask;
    return v < half ? static_cast<std::int64_t>(v)
                    : static_cast<std::int64_t>(v) - static_cast<std::int64_t>(mask) - 1;
}

} // namespace shadownet::testutil
