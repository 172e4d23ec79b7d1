#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "shadownet/errors.hpp"

namespace shadownet {

// Parameters of the value ring Z_{2^l} and its fixed-point encoding.
//   bits      l, ring width (8..64)
//   field     p, size of the comparison field used by the analytic cost
//             model (the engine itself never computes in Z_p)
//   frac_bits fixed-point fractional bits
struct RingParams {
    unsigned bits = 64;
    unsigned field = 67;
    unsigned frac_bits = 13;

    void validate() const {
        if (bits < 8 || bits > 64)
            throw RangeError("ring bits must be in [8, 64], got " + std::to_string(bits));
        if (bits < 2 * frac_bits + 8)
            throw RangeError("ring bits must be >= 2*frac_bits + 8 (one product of headroom)");
        if (field < 2)
            throw RangeError("comparison field size must be >= 2");
    }
};

// Shaped row-major array. T is uint64_t for ring values, double for the
// float reference path.
template <class T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<std::size_t> s)
        : shape(std::move(s)), data(numel_of(shape), T{}) {}
    TensorT(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw ShapeError("tensor data length does not match shape");
    }

    static TensorT scalar(T v) { return TensorT({1}, {v}); }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool operator==(const TensorT& o) const = default;
};

using RingTensor = TensorT<std::uint64_t>;
using FloatTensor = TensorT<double>;

// Arithmetic over Z_{2^l}: wrapping, never trapping. Also owns the
// two's-complement signed view (sign bit = MSB of the l-bit word) and the
// fixed-point encode/decode pair.
class Ring {
public:
    explicit Ring(RingParams p = {}) : params_(p) {
        params_.validate();
        mask_ = p.bits == 64 ? ~0ULL : ((1ULL << p.bits) - 1ULL);
        sign_bit_ = 1ULL << (p.bits - 1);
    }

    const RingParams& params() const { return params_; }
    unsigned bits() const { return params_.bits; }
    unsigned frac_bits() const { return params_.frac_bits; }
    std::uint64_t mask() const { return mask_; }
    std::size_t word_bytes() const { return (params_.bits + 7) / 8; }

    std::uint64_t reduce(std::uint64_t v) const { return v & mask_; }
    std::uint64_t add(std::uint64_t a, std::uint64_t b) const { return (a + b) & mask_; }
    std::uint64_t sub(std::uint64_t a, std::uint64_t b) const { return (a - b) & mask_; }
    std::uint64_t neg(std::uint64_t a) const { return (~a + 1) & mask_; }
    std::uint64_t mul(std::uint64_t a, std::uint64_t b) const { return (a * b) & mask_; }

    std::int64_t to_signed(std::uint64_t v) const {
        v &= mask_;
        if (v & sign_bit_) return static_cast<std::int64_t>(v | ~mask_);
        return static_cast<std::int64_t>(v);
    }

    std::uint64_t from_signed(std::int64_t x) const {
        return static_cast<std::uint64_t>(x) & mask_;
    }

    // "x >= 0" over the signed view, i.e. ring value < 2^(l-1).
    bool is_nonneg(std::uint64_t v) const { return ((v & mask_) & sign_bit_) == 0; }

    // Heaviside step: 1 iff signed(v) >= 0.
    std::uint64_t heaviside(std::uint64_t v) const { return is_nonneg(v) ? 1 : 0; }

    // round(x * 2^f) as two's complement; |x| must stay inside the signed
    // range after scaling.
    std::uint64_t encode(double x) const {
        long double t = static_cast<long double>(x) * std::exp2l(params_.frac_bits);
        long double limit = std::exp2l(static_cast<int>(params_.bits) - 1);
        if (!(t < limit - 0.5L) || !(t > -limit - 0.5L))
            throw RangeError("fixed-point overflow encoding " + std::to_string(x));
        return from_signed(llroundl(t));
    }

    double decode(std::uint64_t v) const {
        return static_cast<double>(to_signed(v)) * std::exp2(-static_cast<int>(params_.frac_bits));
    }

    // Exact fixed-point rescale: arithmetic shift of the signed view by
    // frac_bits. Used after a product of two scale-f values.
    std::uint64_t trunc(std::uint64_t v) const {
        return from_signed(to_signed(v) >> params_.frac_bits);
    }

    // -------- elementwise tensor arithmetic --------

    RingTensor add(const RingTensor& a, const RingTensor& b) const { return zip(a, b, '+'); }
    RingTensor sub(const RingTensor& a, const RingTensor& b) const { return zip(a, b, '-'); }
    RingTensor mul(const RingTensor& a, const RingTensor& b) const { return zip(a, b, '*'); }

    RingTensor neg(const RingTensor& a) const {
        RingTensor r = a;
        for (auto& v : r.data) v = neg(v);
        return r;
    }

    RingTensor scalar_mul(const RingTensor& a, std::uint64_t s) const {
        RingTensor r = a;
        for (auto& v : r.data) v = mul(v, s);
        return r;
    }

    RingTensor scalar_add(const RingTensor& a, std::uint64_t s) const {
        RingTensor r = a;
        for (auto& v : r.data) v = add(v, s);
        return r;
    }

    RingTensor trunc(const RingTensor& a) const {
        RingTensor r = a;
        for (auto& v : r.data) v = trunc(v);
        return r;
    }

    RingTensor encode(const FloatTensor& x) const {
        RingTensor r(x.shape);
        for (std::size_t i = 0; i < x.numel(); ++i) r.data[i] = encode(x.data[i]);
        return r;
    }

    FloatTensor decode(const RingTensor& v) const {
        FloatTensor r(v.shape);
        for (std::size_t i = 0; i < v.numel(); ++i) r.data[i] = decode(v.data[i]);
        return r;
    }

private:
    RingTensor zip(const RingTensor& a, const RingTensor& b, char op) const {
        if (!a.same_shape(b)) {
            // scalar broadcast: a 1-element operand combines with any shape
            if (b.numel() == 1) {
                RingTensor r = a;
                for (auto& v : r.data) v = apply(v, b.data[0], op);
                return r;
            }
            if (a.numel() == 1) {
                RingTensor r = b;
                for (auto& v : r.data) v = apply(a.data[0], v, op);
                return r;
            }
            throw ShapeError("elementwise ring op on mismatched shapes");
        }
        RingTensor r = a;
        for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] = apply(a.data[i], b.data[i], op);
        return r;
    }

    std::uint64_t apply(std::uint64_t a, std::uint64_t b, char op) const {
        switch (op) {
            case '+': return add(a, b);
            case '-': return sub(a, b);
            default: return mul(a, b);
        }
    }

    RingParams params_;
    std::uint64_t mask_ = ~0ULL;
    std::uint64_t sign_bit_ = 0;
};

} // namespace shadownet
