#include "shadownet/protocols.hpp"

#include <cmath>

#include "shadownet/errors.hpp"
#include "shadownet/tensor_ops.hpp"

namespace shadownet {

namespace {

void append_words(const Ring& ring, const RingTensor& t, std::vector<std::uint8_t>& out) {
    const std::size_t wb = ring.word_bytes();
    out.reserve(out.size() + t.numel() * wb);
    for (std::uint64_t v : t.data)
        for (std::size_t b = 0; b < wb; ++b) out.push_back((v >> (8 * b)) & 0xff);
}

void check_mul_dims(const MulDims& d) {
    if (d.kind == MulKind::MatMul) {
        if (d.lhs.size() != 2 || d.rhs.size() != 2 || d.lhs[1] != d.rhs[0])
            throw ShapeError("matmul inner dimensions disagree");
    } else if (d.lhs != d.rhs) {
        throw ShapeError("elementwise multiplication on mismatched shapes");
    }
}

RingTensor combine(const Ring& ring, MulKind kind, const RingTensor& a, const RingTensor& b) {
    return kind == MulKind::MatMul ? matmul(ring, a, b) : ring.mul(a, b);
}

SharePair rerandomize(Session& s, const Ring& ring, const SharePair& a) {
    auto [u0, u1] = zero_shares(ring, s.pair_cr(0, 1), a.shape());
    return {{0, ring.add(a.h0.payload, u0)}, {1, ring.add(a.h1.payload, u1)}};
}

} // namespace

std::vector<BeaverTriple> deal_triples(Session& s, const Ring& ring,
                                       const std::vector<MulDims>& dims) {
    if (dims.empty()) throw ProtocolError("triple dealing needs at least one shape");
    CommonRandomness& cr02 = s.pair_cr(0, 2);
    CommonRandomness& cr12 = s.pair_cr(1, 2);

    std::vector<BeaverTriple> out;
    out.reserve(dims.size());
    std::vector<std::uint8_t> w0_bytes, w1_bytes;
    for (const MulDims& d : dims) {
        check_mul_dims(d);
        RingTensor u0 = common_random_tensor(ring, cr02, d.lhs);
        RingTensor v0 = common_random_tensor(ring, cr02, d.rhs);
        RingTensor u1 = common_random_tensor(ring, cr12, d.lhs);
        RingTensor v1 = common_random_tensor(ring, cr12, d.rhs);
        RingTensor w = combine(ring, d.kind, ring.add(u0, u1), ring.add(v0, v1));
        RingTensor w0 = random_tensor(ring, s.producer_rng(), w.shape);
        RingTensor w1 = ring.sub(w, w0);
        append_words(ring, w0, w0_bytes);
        append_words(ring, w1, w1_bytes);
        out.push_back({d.kind,
                       SharePair{{0, std::move(u0)}, {1, std::move(u1)}},
                       SharePair{{0, std::move(v0)}, {1, std::move(v1)}},
                       SharePair{{0, std::move(w0)}, {1, std::move(w1)}}});
    }
    s.exchange({{2, 0, "offline", std::move(w0_bytes)}, {2, 1, "offline", std::move(w1_bytes)}});
    return out;
}

std::vector<SharePair> mul_batch(Session& s, const Ring& ring, const std::vector<MulJob>& jobs) {
    if (jobs.empty()) throw ProtocolError("empty multiplication batch");
    std::vector<MulDims> dims;
    dims.reserve(jobs.size());
    for (const MulJob& j : jobs) dims.push_back({j.kind, j.lhs.shape(), j.rhs.shape()});
    std::vector<BeaverTriple> triples = deal_triples(s, ring, dims);

    // Open E = A - U and F = B - V: each party crosses its share.
    std::vector<RingTensor> e0s, e1s, f0s, f1s;
    std::vector<std::uint8_t> open0, open1;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        e0s.push_back(ring.sub(jobs[i].lhs.h0.payload, triples[i].u.h0.payload));
        f0s.push_back(ring.sub(jobs[i].rhs.h0.payload, triples[i].v.h0.payload));
        e1s.push_back(ring.sub(jobs[i].lhs.h1.payload, triples[i].u.h1.payload));
        f1s.push_back(ring.sub(jobs[i].rhs.h1.payload, triples[i].v.h1.payload));
        append_words(ring, e0s.back(), open0);
        append_words(ring, f0s.back(), open0);
        append_words(ring, e1s.back(), open1);
        append_words(ring, f1s.back(), open1);
    }
    s.exchange(
        {{0, 1, "matmul-open", std::move(open0)}, {1, 0, "matmul-open", std::move(open1)}});

    // Z_j = j*E(*)F + E(*)V_j + U_j(*)F + W_j, so Z0 + Z1 = A(*)B.
    std::vector<SharePair> out;
    out.reserve(jobs.size());
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const MulKind k = jobs[i].kind;
        RingTensor e = ring.add(e0s[i], e1s[i]);
        RingTensor f = ring.add(f0s[i], f1s[i]);
        RingTensor z0 = ring.add(ring.add(combine(ring, k, e, triples[i].v.h0.payload),
                                          combine(ring, k, triples[i].u.h0.payload, f)),
                                 triples[i].w.h0.payload);
        RingTensor z1 = ring.add(ring.add(combine(ring, k, e, triples[i].v.h1.payload),
                                          combine(ring, k, triples[i].u.h1.payload, f)),
                                 triples[i].w.h1.payload);
        z1 = ring.add(z1, combine(ring, k, e, f));
        out.push_back({{0, std::move(z0)}, {1, std::move(z1)}});
    }
    return out;
}

SharePair pi_matmul(Session& s, const Ring& ring, const SharePair& a, const SharePair& b) {
    return mul_batch(s, ring, {{MulKind::MatMul, a, b}})[0];
}

SharePair pi_conv2d(Session& s, const Ring& ring, const SharePair& x, const SharePair& k,
                    std::size_t stride, std::size_t pad) {
    if (x.shape().size() != 3) throw ShapeError("conv input must be h x w x c");
    if (k.shape().size() != 4 || k.shape()[0] != k.shape()[1])
        throw ShapeError("conv kernel must be f x f x c x o");
    if (k.shape()[2] != x.shape()[2])
        throw ShapeError("conv kernel channels do not match input");
    const std::size_t f = k.shape()[0], c = k.shape()[2], o = k.shape()[3];
    const std::size_t oh = conv_out_dim(x.shape()[0], f, stride, pad);
    const std::size_t ow = conv_out_dim(x.shape()[1], f, stride, pad);
    SharePair patches = sp_map(x, [&](const RingTensor& t) { return im2col(t, f, stride, pad); });
    SharePair kmat =
        sp_map(k, [&](const RingTensor& t) { return reshape(t, {f * f * c, o}); });
    SharePair y = pi_matmul(s, ring, patches, kmat);
    return sp_map(y, [&](const RingTensor& t) { return reshape(t, {oh, ow, o}); });
}

std::vector<SharePair> pi_drelu(Session& s, const Ring& ring,
                                const std::vector<SharePair>& as) {
    if (as.empty()) throw ProtocolError("empty comparison batch");
    CommonRandomness& cr01 = s.pair_cr(0, 1);

    std::vector<RingTensor> m0s, m1s;
    std::vector<std::uint8_t> up0, up1;
    for (const SharePair& a : as) {
        auto [z0, z1] = zero_shares(ring, cr01, a.shape());
        m0s.push_back(ring.add(a.h0.payload, z0));
        m1s.push_back(ring.add(a.h1.payload, z1));
        append_words(ring, m0s.back(), up0);
        append_words(ring, m1s.back(), up1);
    }
    s.exchange({{0, 2, "ideal-drelu", std::move(up0)}, {1, 2, "ideal-drelu", std::move(up1)}});

    std::vector<SharePair> out;
    out.reserve(as.size());
    std::vector<std::uint8_t> down0, down1;
    for (std::size_t i = 0; i < as.size(); ++i) {
        RingTensor v = ring.add(m0s[i], m1s[i]);
        RingTensor h(v.shape);
        for (std::size_t j = 0; j < v.numel(); ++j) h.data[j] = ring.heaviside(v.data[j]);
        RingTensor b0 = random_tensor(ring, s.producer_rng(), h.shape);
        RingTensor b1 = ring.sub(h, b0);
        append_words(ring, b0, down0);
        append_words(ring, b1, down1);
        out.push_back({{0, std::move(b0)}, {1, std::move(b1)}});
    }
    s.exchange(
        {{2, 0, "ideal-drelu", std::move(down0)}, {2, 1, "ideal-drelu", std::move(down1)}});
    return out;
}

SharePair pi_drelu(Session& s, const Ring& ring, const SharePair& a) {
    return pi_drelu(s, ring, std::vector<SharePair>{a})[0];
}

SharePair pi_relu(Session& s, const Ring& ring, const SharePair& a) {
    SharePair h = pi_drelu(s, ring, a);
    return mul_batch(s, ring, {{MulKind::Elementwise, std::move(h), a}})[0];
}

SharePair pi_relu6(Session& s, const Ring& ring, const SharePair& a, Relu6Trace* trace) {
    const std::uint64_t six = ring.encode(6.0);
    SharePair alpha = pi_drelu(s, ring, sp_add_public(ring, a, ring.neg(six)));
    SharePair c =
        mul_batch(s, ring, {{MulKind::Elementwise, alpha, sp_public_sub(ring, six, a)}})[0];
    SharePair beta = pi_drelu(s, ring, a);
    SharePair d = mul_batch(s, ring, {{MulKind::Elementwise, beta, sp_add(ring, a, c)}})[0];
    SharePair out = rerandomize(s, ring, d);
    if (trace) *trace = {std::move(alpha), std::move(c), std::move(beta), std::move(d)};
    return out;
}

SharePair pi_leaky_relu(Session& s, const Ring& ring, const SharePair& a) {
    SharePair alpha = pi_drelu(s, ring, a);
    SharePair coef = sp_add_public(ring, sp_scale_public(ring, alpha, ring.encode(0.9)),
                                   ring.encode(kLeakySlope));
    SharePair c = mul_batch(s, ring, {{MulKind::Elementwise, a, std::move(coef)}})[0];
    return rerandomize(s, ring, sp_trunc(ring, c));
}

SharePair pi_maxpool(Session& s, const Ring& ring, const SharePair& x, std::size_t f,
                     std::size_t stride) {
    SharePair m = sp_map(x, [&](const RingTensor& t) {
        return pool_window_element(t, f, stride, 0);
    });
    for (std::size_t t = 1; t < f * f; ++t) {
        SharePair e = sp_map(x, [&](const RingTensor& xt) {
            return pool_window_element(xt, f, stride, t);
        });
        SharePair diff = sp_sub(ring, m, e);
        SharePair h = pi_drelu(s, ring, diff);
        SharePair prod =
            mul_batch(s, ring, {{MulKind::Elementwise, std::move(h), std::move(diff)}})[0];
        m = sp_add(ring, e, prod);
    }
    return m;
}

SharePair avgpool(const Ring& ring, const SharePair& x, std::size_t f, std::size_t stride) {
    SharePair sum = sp_map(x, [&](const RingTensor& t) {
        return pool_window_element(t, f, stride, 0);
    });
    for (std::size_t t = 1; t < f * f; ++t) {
        SharePair e = sp_map(x, [&](const RingTensor& xt) {
            return pool_window_element(xt, f, stride, t);
        });
        sum = sp_add(ring, sum, e);
    }
    const std::uint64_t inv = ring.encode(1.0 / static_cast<double>(f * f));
    return sp_trunc(ring, sp_scale_public(ring, sum, inv));
}

SharePair pi_partial_activation(Session& s, const Ring& ring, const SharePair& x,
                                const PartialActivationSpec& spec) {
    if (x.shape().empty() || x.shape().back() == 0)
        throw ShapeError("partial activation needs at least one channel");
    const std::size_t c = x.shape().back();
    const std::size_t k = active_channels(spec.ratio, c);
    if (k == 0 || spec.inner == ActivationKind::None) return x;
    if (k == c) return pi_activation(s, ring, x, spec.inner);
    SharePair head = sp_map(x, [&](const RingTensor& t) { return slice_channels(t, 0, k); });
    SharePair tail = sp_map(x, [&](const RingTensor& t) { return slice_channels(t, k, c); });
    SharePair act = pi_activation(s, ring, head, spec.inner);
    return {{0, concat_channels<std::uint64_t>({act.h0.payload, tail.h0.payload})},
            {1, concat_channels<std::uint64_t>({act.h1.payload, tail.h1.payload})}};
}

SharePair pi_activation(Session& s, const Ring& ring, const SharePair& a, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::None: return a;
        case ActivationKind::Relu: return pi_relu(s, ring, a);
        case ActivationKind::Relu6: return pi_relu6(s, ring, a);
        case ActivationKind::LeakyRelu: return pi_leaky_relu(s, ring, a);
    }
    throw ProtocolError("unknown activation kind");
}

} // namespace shadownet
