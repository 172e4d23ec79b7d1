#pragma once

#include <utility>

#include "shadownet/prg.hpp"
#include "shadownet/ring.hpp"

namespace shadownet {

// One party's additive 2-of-2 share of a RingTensor over Z_{2^l}.
struct ShareHalf {
    int owner = 0; // 0 or 1
    RingTensor payload;
};

// Both halves of one sharing. The engine simulates all parties in one
// address space, so protocol code carries pairs; each half is still only
// ever combined with local data of its owner.
struct SharePair {
    ShareHalf h0{0, {}};
    ShareHalf h1{1, {}};

    const std::vector<std::size_t>& shape() const { return h0.payload.shape; }
    std::size_t numel() const { return h0.payload.numel(); }
};

// Pairwise common randomness: a shared seed plus a message counter.
// Identical (seed, counter, shape) yields identical output on every party.
struct CommonRandomness {
    Seed256 seed{};
    std::uint64_t counter = 0;
};

inline RingTensor random_tensor(const Ring& ring, RandomStream& rng,
                                const std::vector<std::size_t>& shape) {
    RingTensor t(shape);
    for (auto& v : t.data) v = rng.next() & ring.mask();
    return t;
}

// Fresh additive sharing: half 0 uniform, half 1 = x - half 0.
inline SharePair share(const Ring& ring, const RingTensor& x, RandomStream& rng) {
    RingTensor r = random_tensor(ring, rng, x.shape);
    return SharePair{{0, r}, {1, ring.sub(x, r)}};
}

inline RingTensor reconstruct(const Ring& ring, const ShareHalf& a, const ShareHalf& b) {
    if (a.owner == b.owner)
        throw ProtocolError("reconstruct needs shares from distinct owners");
    if (!a.payload.same_shape(b.payload))
        throw ShapeError("reconstruct on mismatched share shapes");
    return ring.add(a.payload, b.payload);
}

inline RingTensor reconstruct(const Ring& ring, const SharePair& s) {
    return reconstruct(ring, s.h0, s.h1);
}

// Uniform tensor from pairwise common randomness; both seed holders derive
// the same values without communication. Consumes one counter value.
inline RingTensor common_random_tensor(const Ring& ring, CommonRandomness& cr,
                                       const std::vector<std::size_t>& shape) {
    CounterPrg prg(cr.seed);
    const std::uint64_t ctr = cr.counter++;
    RingTensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = prg.block(ctr, i) & ring.mask();
    return t;
}

// Random shares of zero: u0 pseudorandom from (seed, counter), u1 = -u0.
// Consumes one counter value per call.
inline std::pair<RingTensor, RingTensor> zero_shares(const Ring& ring, CommonRandomness& cr,
                                                     const std::vector<std::size_t>& shape) {
    CounterPrg prg(cr.seed);
    const std::uint64_t ctr = cr.counter++;
    RingTensor u0(shape);
    for (std::size_t i = 0; i < u0.numel(); ++i) u0.data[i] = prg.block(ctr, i) & ring.mask();
    return {u0, ring.neg(u0)};
}

// Local fixed-point rescale of one share after a product of two scale-f
// values. Party 0 arithmetic-shifts; party 1 negates, shifts, negates.
// Reconstruction equals exact truncation within +-1 ULP except with
// probability ~2^-(l - 2f - value_bits) per element.
inline ShareHalf truncate_share(const Ring& ring, const ShareHalf& s) {
    ShareHalf out{s.owner, RingTensor(s.payload.shape)};
    for (std::size_t i = 0; i < s.payload.numel(); ++i) {
        const std::uint64_t v = s.payload.data[i];
        out.payload.data[i] = s.owner == 0 ? ring.trunc(v) : ring.neg(ring.trunc(ring.neg(v)));
    }
    return out;
}

// -------- local share algebra (affine homomorphisms) --------

inline SharePair sp_add(const Ring& ring, const SharePair& a, const SharePair& b) {
    return {{0, ring.add(a.h0.payload, b.h0.payload)}, {1, ring.add(a.h1.payload, b.h1.payload)}};
}

inline SharePair sp_sub(const Ring& ring, const SharePair& a, const SharePair& b) {
    return {{0, ring.sub(a.h0.payload, b.h0.payload)}, {1, ring.sub(a.h1.payload, b.h1.payload)}};
}

inline SharePair sp_neg(const Ring& ring, const SharePair& a) {
    return {{0, ring.neg(a.h0.payload)}, {1, ring.neg(a.h1.payload)}};
}

// Add a public constant: by convention party 0 absorbs it.
inline SharePair sp_add_public(const Ring& ring, const SharePair& a, std::uint64_t c) {
    return {{0, ring.scalar_add(a.h0.payload, c)}, {1, a.h1.payload}};
}

// Public constant minus a sharing: c - a.
inline SharePair sp_public_sub(const Ring& ring, std::uint64_t c, const SharePair& a) {
    return sp_add_public(ring, sp_neg(ring, a), c);
}

inline SharePair sp_scale_public(const Ring& ring, const SharePair& a, std::uint64_t c) {
    return {{0, ring.scalar_mul(a.h0.payload, c)}, {1, ring.scalar_mul(a.h1.payload, c)}};
}

inline SharePair sp_trunc(const Ring& ring, const SharePair& a) {
    return {truncate_share(ring, a.h0), truncate_share(ring, a.h1)};
}

// Applies a structural (index permutation / gather) op to both halves.
template <class F>
SharePair sp_map(const SharePair& a, F&& f) {
    return {{0, f(a.h0.payload)}, {1, f(a.h1.payload)}};
}

} // namespace shadownet
